"""Triangle meshes with implicit halfedges, OFF/OBJ ingestion, and test surfaces.

Halfedge ``h = 3*f + k`` runs from corner ``k`` of face ``f`` to corner
``(k+1) % 3``.  ``twin[h] == -1`` marks a boundary halfedge.  All handles are
dense integer indices.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


class MeshError(ValueError):
    pass


class ParseError(MeshError):
    pass


class NonManifoldError(MeshError):
    pass


class NonTriangularFaceError(ParseError):
    pass


class BoundaryError(MeshError):
    pass


class DegenerateFaceError(MeshError):
    pass


class TopologyError(MeshError):
    pass


class TriMesh:
    """Oriented manifold triangle mesh, closed or with boundary."""

    def __init__(self, faces, n_vertices: int | None = None, coords=None):
        faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
        if n_vertices is None:
            n_vertices = int(faces.max()) + 1 if len(faces) else 0
        self.faces = faces
        self.n_vertices = int(n_vertices)
        self.coords = None if coords is None else np.asarray(coords, dtype=float)
        self._build()

    def _build(self):
        F = self.faces
        nf = len(F)
        if np.any(F[:, 0] == F[:, 1]) or np.any(F[:, 1] == F[:, 2]) or np.any(F[:, 0] == F[:, 2]):
            raise NonManifoldError("face with repeated vertex")
        origin = F.reshape(-1)
        dest = np.roll(F, -1, axis=1).reshape(-1)
        self.he_origin = origin
        self.he_dest = dest
        nh = 3 * nf
        index = {}
        for h in range(nh):
            key = (int(origin[h]), int(dest[h]))
            if key in index:
                raise NonManifoldError(f"directed edge {key} appears twice (bad orientation or non-manifold)")
            index[key] = h
        twin = np.full(nh, -1, dtype=np.int64)
        for (u, v), h in index.items():
            t = index.get((v, u))
            if t is not None:
                twin[h] = t
        self.twin = twin
        self._he_index = index
        # edges: one per twin pair or boundary halfedge
        he_edge = np.full(nh, -1, dtype=np.int64)
        edges = []
        for h in range(nh):
            if he_edge[h] >= 0:
                continue
            e = len(edges)
            he_edge[h] = e
            if twin[h] >= 0:
                he_edge[twin[h]] = e
            edges.append((origin[h], dest[h]))
        self.he_edge = he_edge
        self.edges = np.array(edges, dtype=np.int64).reshape(-1, 2)
        self.edge_he = np.full(len(edges), -1, dtype=np.int64)
        for h in range(nh - 1, -1, -1):
            self.edge_he[he_edge[h]] = h
        # outgoing halfedge per vertex; boundary vertices get their boundary halfedge
        out = np.full(self.n_vertices, -1, dtype=np.int64)
        out[origin[::-1]] = np.arange(nh)[::-1]
        bnd = np.nonzero(twin < 0)[0]
        out[origin[bnd]] = bnd
        self.vertex_he = out
        self._check_vertex_manifold()

    def _check_vertex_manifold(self):
        nh = len(self.he_origin)
        seen = np.zeros(nh, dtype=bool)
        for v in range(self.n_vertices):
            h0 = self.vertex_he[v]
            if h0 < 0:
                continue
            for h in self._fan(h0):
                seen[h] = True
        if not np.all(seen):
            bad = sorted(set(int(x) for x in self.he_origin[~seen]))
            raise NonManifoldError(f"vertices with more than one fan: {bad[:10]}")

    def _fan(self, h0):
        """Outgoing halfedges around origin(h0), rotating counterclockwise."""
        h = h0
        while True:
            yield h
            p = prev(h)
            h = self.twin[p]
            if h < 0 or h == h0:
                return

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_halfedges(self) -> int:
        return len(self.he_origin)

    def is_closed(self) -> bool:
        return bool(np.all(self.twin >= 0))

    def halfedge(self, u: int, v: int) -> int:
        return self._he_index.get((u, v), -1)

    def edge_between(self, u: int, v: int) -> int:
        h = self.halfedge(u, v)
        if h < 0:
            h = self.halfedge(v, u)
        return -1 if h < 0 else int(self.he_edge[h])

    def outgoing(self, v: int) -> list[int]:
        """Outgoing halfedges of v in counterclockwise order.

        For a boundary vertex the list starts at its boundary halfedge.
        """
        h0 = self.vertex_he[v]
        if h0 < 0:
            return []
        return list(self._fan(h0))

    def neighbors(self, v: int) -> list[int]:
        """One-ring in counterclockwise order (boundary vertices: the full chain)."""
        hs = self.outgoing(v)
        ring = [int(self.he_dest[h]) for h in hs]
        if hs and self.twin[prev(hs[-1])] < 0:
            ring.append(int(self.he_origin[prev(hs[-1])]))
        return ring

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.reshape(-1), minlength=self.n_vertices)

    def boundary_loops(self) -> list[list[int]]:
        """Boundary halfedge cycles, faces on the left."""
        done = set()
        loops = []
        for h in np.nonzero(self.twin < 0)[0]:
            h = int(h)
            if h in done:
                continue
            loop = []
            while h not in done:
                done.add(h)
                loop.append(h)
                h = self.next_boundary(h)
            loops.append(loop)
        return loops

    def next_boundary(self, h: int) -> int:
        n = nxt(h)
        while self.twin[n] >= 0:
            n = nxt(self.twin[n])
        return int(n)

    def adjacency(self) -> list[list[int]]:
        adj = [[] for _ in range(self.n_vertices)]
        for u, v in self.edges:
            adj[u].append(int(v))
            adj[v].append(int(u))
        return adj

    def validate(self):
        """Halfedge algebra checks; raises on failure."""
        h = np.arange(self.n_halfedges)
        inner = self.twin >= 0
        assert np.all(self.twin[self.twin[inner]] == h[inner])
        assert np.all(nxt(nxt(nxt(h))) == h)
        assert np.all(self.he_origin[self.twin[inner]] == self.he_dest[inner])


def nxt(h):
    return h - h % 3 + (h + 1) % 3


def prev(h):
    return h - h % 3 + (h + 2) % 3


def euler_characteristic(mesh: TriMesh) -> int:
    used = np.unique(mesh.faces)
    return int(len(used) - mesh.n_edges + mesh.n_faces)


def genus(mesh: TriMesh) -> int:
    chi = euler_characteristic(mesh)
    nb = len(mesh.boundary_loops())
    if (2 - chi - nb) % 2:
        raise TopologyError(f"Euler characteristic {chi} is inconsistent with an orientable surface")
    return (2 - chi - nb) // 2


def check_closed_surface(mesh: TriMesh, min_genus: int = 2) -> int:
    """Pipeline entry check: closed, connected, genus >= min_genus."""
    if not mesh.is_closed():
        raise BoundaryError(f"mesh has {len(mesh.boundary_loops())} boundary loop(s); a closed surface is required")
    if _components(mesh) != 1:
        raise TopologyError("mesh is not connected")
    g = genus(mesh)
    if g < min_genus:
        raise TopologyError(f"genus {g} < {min_genus}")
    return g


def _components(mesh: TriMesh) -> int:
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components

    e = mesh.edges
    n = mesh.n_vertices
    A = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
    return connected_components(A, directed=False)[0]


# ---------------------------------------------------------------- metrics


def edge_lengths(mesh: TriMesh, coords=None) -> np.ndarray:
    X = mesh.coords if coords is None else np.asarray(coords, float)
    e = mesh.edges
    return np.linalg.norm(X[e[:, 0]] - X[e[:, 1]], axis=1)


def face_edge_lengths(mesh: TriMesh, lengths) -> np.ndarray:
    """(F, 3) lengths; column k is the side opposite corner k."""
    lengths = np.asarray(lengths, float)
    he = mesh.he_edge.reshape(-1, 3)
    # halfedge k runs corner k -> k+1, so it is opposite corner k+2
    return lengths[he[:, [1, 2, 0]]]


def check_triangle_inequalities(mesh: TriMesh, lengths) -> np.ndarray:
    L = face_edge_lengths(mesh, lengths)
    a, b, c = L[:, 0], L[:, 1], L[:, 2]
    return (a < b + c) & (b < a + c) & (c < a + b) & (L.min(axis=1) > 0)


def induced_metric(mesh: TriMesh, coords=None) -> np.ndarray:
    """Euclidean edge lengths of an embedded mesh."""
    lengths = edge_lengths(mesh, coords)
    ok = check_triangle_inequalities(mesh, lengths)
    if not np.all(ok):
        bad = np.nonzero(~ok)[0]
        raise DegenerateFaceError(f"{len(bad)} degenerate face(s), first: {bad[:5].tolist()}")
    return lengths


# ---------------------------------------------------------------- file IO


def load_mesh(path, fmt: str | None = None) -> TriMesh:
    path = Path(path)
    fmt = (fmt or path.suffix.lstrip(".")).upper()
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    if fmt == "OFF":
        coords, faces = _parse_off(text)
    elif fmt == "OBJ":
        coords, faces = _parse_obj(text)
    else:
        raise ParseError(f"unsupported mesh format {fmt!r}")
    if len(faces) == 0:
        raise ParseError("mesh has no faces")
    faces = np.asarray(faces, dtype=np.int64)
    if faces.min() < 0 or faces.max() >= len(coords):
        raise ParseError("face index out of range")
    return TriMesh(faces, n_vertices=len(coords), coords=np.asarray(coords, float))


def load_closed_mesh(path, fmt: str | None = None) -> TriMesh:
    mesh = load_mesh(path, fmt)
    if not mesh.is_closed():
        raise BoundaryError(f"{path}: mesh has boundary")
    return mesh


def _tokens(text):
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            yield line


def _parse_off(text):
    lines = _tokens(text)
    try:
        head = next(lines)
        if not head.startswith("OFF"):
            raise ParseError("missing OFF header")
        rest = head[3:].split()
        counts = rest if rest else next(lines).split()
        nv, nf = int(counts[0]), int(counts[1])
        coords = []
        for _ in range(nv):
            vals = next(lines).split()
            coords.append([float(x) for x in vals[:3]])
        faces = []
        for _ in range(nf):
            vals = next(lines).split()
            n = int(vals[0])
            if n != 3:
                raise NonTriangularFaceError(f"face with {n} vertices")
            faces.append([int(x) for x in vals[1:4]])
    except (StopIteration, ValueError, IndexError) as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(f"malformed OFF: {exc}") from exc
    return coords, faces


def _parse_obj(text):
    coords, faces = [], []
    for line in _tokens(text):
        tok = line.split()
        try:
            if tok[0] == "v":
                coords.append([float(x) for x in tok[1:4]])
            elif tok[0] == "f":
                idx = [int(t.split("/")[0]) for t in tok[1:]]
                if len(idx) != 3:
                    raise NonTriangularFaceError(f"face with {len(idx)} vertices")
                faces.append([i - 1 if i > 0 else len(coords) + i for i in idx])
        except ParseError:
            raise
        except ValueError as exc:
            raise ParseError(f"malformed OBJ line {line!r}") from exc
    return coords, faces


def save_off(path, mesh: TriMesh, coords=None):
    X = mesh.coords if coords is None else np.asarray(coords, float)
    if X.shape[1] == 2:
        X = np.column_stack([X, np.zeros(len(X))])
    lines = ["OFF", f"{len(X)} {mesh.n_faces} {mesh.n_edges}"]
    lines += [" ".join(repr(float(c)) for c in row) for row in X]
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.faces]
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------- test surfaces


def _holes_mask(genus: int, cells: int):
    """Planar mask: a (4g+1) x 5 block plate with g square holes."""
    W, H = 4 * genus + 1, 5
    mask = np.ones((W * cells, H * cells), dtype=bool)
    for k in range(genus):
        x0 = (4 * k + 1) * cells + cells // 2
        mask[x0 : x0 + 2 * cells, cells + cells // 2 : 4 * cells - cells // 2] = False
    return mask


def make_genus_surface(genus: int, cells: int = 2, hub_radius: int | None = None, smooth: int = 3) -> TriMesh:
    """Closed genus-g surface: the boundary of a slab with g square holes.

    ``cells`` (even) sets the resolution in grid cells per unit block.  The
    top face carries a fan hub of valence ``8 * hub_radius`` between the first
    two holes, so a one-point system of 2g loops fits around it.  Light
    Laplacian smoothing breaks the piecewise-flat right-angle metric.
    """
    if genus < 1 or cells < 2 or cells % 2:
        raise ValueError("need genus >= 1 and an even cells >= 2")
    if hub_radius is None:
        hub_radius = cells if genus >= 2 else 0
    mask = _holes_mask(genus, cells)
    nx, ny = mask.shape
    used = np.zeros((nx + 1, ny + 1), dtype=bool)
    for dx in (0, 1):
        for dy in (0, 1):
            used[dx : nx + dx, dy : ny + dy] |= mask

    coords = []
    top = -np.ones((nx + 1, ny + 1), dtype=np.int64)
    bot = -np.ones((nx + 1, ny + 1), dtype=np.int64)
    h = 1.0 / cells
    for i in range(nx + 1):
        for j in range(ny + 1):
            if used[i, j]:
                top[i, j] = len(coords)
                coords.append([i * h, j * h, 0.5])
                bot[i, j] = len(coords)
                coords.append([i * h, j * h, -0.5])

    columns = {}

    def column(p):
        # wall vertices from top (index 0) to bottom (index cells)
        if p not in columns:
            col = [int(top[p])]
            for l in range(1, cells):
                col.append(len(coords))
                coords.append([p[0] * h, p[1] * h, 0.5 - l * h])
            col.append(int(bot[p]))
            columns[p] = col
        return columns[p]

    r = hub_radius
    hx, hy = (9 * cells) // 2, (5 * cells) // 2
    hub_cells = {(i, j) for i in range(hx - r, hx + r) for j in range(hy - r, hy + r)}
    if not all(mask[c] for c in hub_cells):
        raise ValueError("hub does not fit on the plate")

    faces = []

    def quad(a, b, c, d, flip):
        # a b c d counterclockwise seen from outside
        if flip:
            faces.extend([[a, b, c], [a, c, d]])
        else:
            faces.extend([[a, b, d], [b, c, d]])

    for i in range(nx):
        for j in range(ny):
            if not mask[i, j]:
                continue
            flip = (i + j) % 2 == 0
            if (i, j) not in hub_cells:
                quad(top[i, j], top[i + 1, j], top[i + 1, j + 1], top[i, j + 1], flip)
            quad(bot[i, j], bot[i, j + 1], bot[i + 1, j + 1], bot[i + 1, j], flip)
            # walls: sides of the top quad in counterclockwise order
            sides = [((i, j), (i + 1, j), (i, j - 1)), ((i + 1, j), (i + 1, j + 1), (i + 1, j)),
                     ((i + 1, j + 1), (i, j + 1), (i, j + 1)), ((i, j + 1), (i, j), (i - 1, j))]
            for P, Q, nb in sides:
                inside = 0 <= nb[0] < nx and 0 <= nb[1] < ny and mask[nb]
                if inside:
                    continue
                cp, cq = column(P), column(Q)
                for l in range(cells):
                    quad(cq[l], cp[l], cp[l + 1], cq[l + 1], (l + i + j) % 2 == 0)
    if r > 0:
        ring = [(i, hy - r) for i in range(hx - r, hx + r)]
        ring += [(hx + r, j) for j in range(hy - r, hy + r)]
        ring += [(i, hy + r) for i in range(hx + r, hx - r, -1)]
        ring += [(hx - r, j) for j in range(hy + r, hy - r, -1)]
        hub = int(top[hx, hy])
        ids = [int(top[p]) for p in ring]
        for k in range(len(ids)):
            faces.append([hub, ids[k], ids[(k + 1) % len(ids)]])

    faces = np.array(faces, dtype=np.int64)
    coords = np.array(coords, dtype=float)
    keep = np.zeros(len(coords), dtype=bool)
    keep[faces.reshape(-1)] = True
    remap = -np.ones(len(coords), dtype=np.int64)
    remap[keep] = np.arange(int(keep.sum()))
    faces = remap[faces]
    coords = coords[keep]
    mesh = TriMesh(faces, n_vertices=len(coords), coords=coords)
    for _ in range(smooth):
        coords = _laplacian_smooth(mesh, coords, 0.5)
    mesh.coords = coords
    return mesh


def _laplacian_smooth(mesh: TriMesh, X, lam):
    n = mesh.n_vertices
    e = mesh.edges
    acc = np.zeros_like(X)
    np.add.at(acc, e[:, 0], X[e[:, 1]])
    np.add.at(acc, e[:, 1], X[e[:, 0]])
    deg = mesh.degrees()[:, None]
    return X + lam * (acc / deg - X)


def octahedron() -> TriMesh:
    coords = np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]], float)
    faces = [[0, 2, 4], [2, 1, 4], [1, 3, 4], [3, 0, 4], [2, 0, 5], [1, 2, 5], [3, 1, 5], [0, 3, 5]]
    return TriMesh(faces, 6, coords)


@dataclass
class MeshSummary:
    n_vertices: int
    n_edges: int
    n_faces: int
    euler: int
    genus: int


def summarize(mesh: TriMesh) -> MeshSummary:
    return MeshSummary(mesh.n_vertices, mesh.n_edges, mesh.n_faces, euler_characteristic(mesh), genus(mesh))
