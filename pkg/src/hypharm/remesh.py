"""Pulling a mesh drawn on the fundamental polygon back to the original surface.

Hyperbolic triangles are straight in the Klein model, so point location and
interpolation use Euclidean barycentric coordinates there.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.cluster.hierarchy import DisjointSet

from .cut import CutSurface
from .fuchsian import FundamentalPolygon, GroupElement, enumerate_group
from .harmonic import GeodesicRealization
from .hypgeom import apply_arrays, geodesic_point, klein
from .mesh import TriMesh, load_mesh, save_off

BARY_TOL = 1e-12
GLUE_TOL = 1e-9


class CoverageError(RuntimeError):
    pass


class GlueError(ValueError):
    pass


@dataclass
class TemplateMesh:
    """Disk mesh on the polygon; boundary vertices tagged (side, param) and paired."""

    mesh: TriMesh
    points: np.ndarray
    boundary: list[tuple[int, int, float]]
    pairs: list[tuple[int, int]]

    def save(self, off_path, json_path=None):
        X = np.column_stack([self.points.real, self.points.imag, np.zeros(len(self.points))])
        save_off(off_path, self.mesh, X)
        json_path = Path(off_path).with_suffix(".json") if json_path is None else json_path
        data = {
            "boundary": [{"vertex": int(v), "side": int(s), "param": float(t)} for v, s, t in self.boundary],
            "pairs": [[int(a), int(b)] for a, b in self.pairs],
        }
        Path(json_path).write_text(json.dumps(data, indent=1))

    @classmethod
    def load(cls, off_path, json_path=None) -> "TemplateMesh":
        mesh = load_mesh(off_path, "off")
        json_path = Path(off_path).with_suffix(".json") if json_path is None else Path(json_path)
        data = json.loads(Path(json_path).read_text())
        pts = mesh.coords[:, 0] + 1j * mesh.coords[:, 1]
        boundary = [(int(b["vertex"]), int(b["side"]), float(b["param"])) for b in data["boundary"]]
        pairs = [(int(a), int(b)) for a, b in data["pairs"]]
        return cls(mesh, pts, boundary, pairs)


def polygon_template(polygon: FundamentalPolygon, n: int = 4) -> TemplateMesh:
    """Fan the polygon from its center and split each fan triangle n times per edge.

    Points on polygon sides sit at equal hyperbolic arclength, so paired
    sides carry exactly corresponding points; others use Klein barycentrics.
    """
    if n < 3:
        # coarser sides would glue into repeated vertices or doubled edges
        raise ValueError("n must be at least 3")
    N = polygon.n_sides
    index = {}
    pts = []

    def vid(key, z):
        if key not in index:
            index[key] = len(pts)
            pts.append(z)
        return index[key]

    kc = klein(polygon.vertices)
    faces = []
    boundary = []
    for k in range(N):
        a, b = polygon.side(k)
        ka, kb = kc[k], kc[(k + 1) % N]
        grid = {}
        for i in range(n + 1):  # i steps from the center toward the side
            for j in range(i + 1):  # j steps along from vertex k toward k+1
                if i == 0:
                    key = ("c",)
                elif i == n and j == 0:
                    key = ("v", k)
                elif i == n and j == n:
                    key = ("v", (k + 1) % N)
                elif j == 0:
                    key = ("r", k, i)
                elif j == i:
                    key = ("r", (k + 1) % N, i)
                else:
                    key = ("f", k, i, j)
                if i == n:
                    z = geodesic_point(a, b, j / n)
                else:
                    kz = (i - j) / n * ka + j / n * kb
                    z = kz / (1.0 + np.sqrt(1.0 - abs(kz) ** 2))
                grid[i, j] = vid(key, complex(z))
        for i in range(n):
            for j in range(i + 1):
                faces.append([grid[i, j], grid[i + 1, j], grid[i + 1, j + 1]])
                if j < i:
                    faces.append([grid[i, j], grid[i + 1, j + 1], grid[i, j + 1]])
        for j in range(n + 1):
            boundary.append((grid[n, j], k, j / n))
    pts = np.array(pts)
    pairs = []
    side_pts = {}
    for v, s, t in boundary:
        side_pts.setdefault(s, []).append((t, v))
    for i, j in polygon.pairing:
        si = [v for _, v in sorted(side_pts[i])]
        sj = [v for _, v in sorted(side_pts[j])]
        pairs += list(zip(si, sj[::-1]))
        gamma = polygon.side_transform(i)
        # snap the partner side onto the exact images
        pts[sj[::-1]] = gamma(pts[si])
    return TemplateMesh(TriMesh(np.array(faces), len(pts)), pts, boundary, pairs)


def glue_labels(n: int, pairs) -> np.ndarray:
    """Compact labels after identifying paired vertices."""
    ds = DisjointSet(range(n))
    for a, b in pairs:
        ds.merge(int(a), int(b))
    roots = {}
    lab = np.empty(n, dtype=np.int64)
    for v in range(n):
        r = ds[v]
        if r not in roots:
            roots[r] = len(roots)
        lab[v] = roots[r]
    return lab


def template_cut_surface(t: TemplateMesh, polygon: FundamentalPolygon) -> tuple[CutSurface, TriMesh]:
    """The closed surface obtained by gluing a template, presented as its own cut."""
    lab = glue_labels(t.mesh.n_vertices, t.pairs)
    closed = TriMesh(lab[t.mesh.faces], int(lab.max()) + 1)
    pi_E = closed.he_edge[t.mesh.edge_he]
    side_pts = {}
    for v, s, p in t.boundary:
        side_pts.setdefault(s, []).append((p, v))
    segs = [[v for _, v in sorted(side_pts[k])] for k in range(polygon.n_sides)]
    cut = CutSurface(t.mesh, lab, pi_E, int(lab[segs[0][0]]), segs,
                     [polygon.partner(k) for k in range(polygon.n_sides)], [], list(range(polygon.n_sides)))
    return cut, closed


def template_from_realization(r: GeodesicRealization) -> TemplateMesh:
    """The realization's own triangulation as a template."""
    boundary = []
    for k, seg in enumerate(r.cut.segments):
        L = len(seg) - 1
        boundary += [(v, k, i / L) for i, v in enumerate(seg)]
    pairs = []
    for i, seg in enumerate(r.cut.segments):
        j = r.polygon.partner(i)
        if i < j:
            pairs += list(zip(seg, r.cut.segments[j][::-1]))
    return TemplateMesh(r.cut.mesh, r.positions.copy(), boundary, pairs)


# ---------------------------------------------------------------- atlas


@dataclass
class AtlasCopy:
    element: GroupElement
    klein_tri: np.ndarray  # (F, 3) complex Klein coordinates


@dataclass
class CoveringAtlas:
    copies: list[AtlasCopy]
    faces: np.ndarray

    def __len__(self):
        return len(self.copies)

    def locate(self, z) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(copy index, face index, barycentrics) per point; copy -1 when uncovered."""
        kz = klein(np.atleast_1d(np.asarray(z, dtype=complex)))
        copy = np.full(len(kz), -1, dtype=np.int64)
        face = np.full(len(kz), -1, dtype=np.int64)
        bary = np.zeros((len(kz), 3))
        for ci, c in enumerate(self.copies):
            todo = np.nonzero(copy < 0)[0]
            if len(todo) == 0:
                break
            f, b = _locate_in(c.klein_tri, kz[todo])
            hit = f >= 0
            copy[todo[hit]] = ci
            face[todo[hit]] = f[hit]
            bary[todo[hit]] = b[hit]
        return copy, face, bary


def _barycentric(tri, k):
    """Barycentrics of points k (P,) in triangles tri (F, 3): shape (P, F, 3)."""
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    v0, v1 = b - a, c - a
    det = (v0.conjugate() * v1).imag
    w = k[:, None] - a[None, :]
    l1 = (w.conjugate() * v1[None, :]).imag / det  # weight of b
    l2 = (v0.conjugate()[None, :] * w).imag / det  # weight of c
    return np.stack([1.0 - l1 - l2, l1, l2], axis=-1)


def _locate_in(tri, k, chunk: int = 256):
    face = np.full(len(k), -1, dtype=np.int64)
    bary = np.zeros((len(k), 3))
    for s in range(0, len(k), chunk):
        B = _barycentric(tri, k[s : s + chunk])
        inside = np.all(B >= -BARY_TOL, axis=-1)
        # prefer the face with the largest minimum barycentric (most interior)
        score = np.where(inside, B.min(axis=-1), -np.inf)
        best = np.argmax(score, axis=1)
        ok = np.isfinite(score[np.arange(len(best)), best])
        idx = np.arange(s, s + len(best))
        face[idx[ok]] = best[ok]
        bary[idx[ok]] = B[np.arange(len(best)), best][ok]
    return face, bary


def _copy(r: GeodesicRealization, elem: GroupElement) -> AtlasCopy:
    m = elem.transform
    pos = apply_arrays(m.a, m.b, r.positions)
    return AtlasCopy(elem, klein(pos)[r.cut.mesh.faces])


def coverage_samples(polygon: FundamentalPolygon, template: TemplateMesh | None = None, grid: int = 24):
    """Template vertices and edge midpoints plus a grid of points inside the polygon."""
    pts = []
    if template is not None:
        pts.append(template.points)
        e = template.mesh.edges
        kz = klein(template.points)
        mid = 0.5 * (kz[e[:, 0]] + kz[e[:, 1]])
        pts.append(mid / (1.0 + np.sqrt(1.0 - np.abs(mid) ** 2)))
    s = np.abs(polygon.vertices).max()
    x = np.linspace(-s, s, grid)
    g = (x[:, None] + 1j * x[None, :]).ravel()
    g = g[np.abs(g) < s]
    pts.append(g[polygon.contains(g)])
    return np.concatenate(pts)


def build_atlas(r: GeodesicRealization, samples, max_word_len: int = 4) -> CoveringAtlas:
    """Greedily add group elements, shortest words first, until every sample is covered."""
    samples = np.asarray(samples, dtype=complex)
    faces = r.cut.mesh.faces
    copies = []
    uncovered = np.ones(len(samples), dtype=bool)
    for elem in enumerate_group(r.polygon, max_word_len):
        c = _copy(r, elem)
        f, _ = _locate_in(c.klein_tri, klein(samples[uncovered]))
        if np.any(f >= 0):
            copies.append(c)
            idx = np.nonzero(uncovered)[0]
            uncovered[idx[f >= 0]] = False
        if not uncovered.any():
            return CoveringAtlas(copies, faces)
    bad = samples[uncovered]
    raise CoverageError(f"{len(bad)} sample point(s) uncovered with words up to length {max_word_len}, "
                        f"e.g. {bad[:3]}")


# ---------------------------------------------------------------- pull back and glue


def pull_back(template: TemplateMesh, atlas: CoveringAtlas, r: GeodesicRealization, coords) -> np.ndarray:
    """3D position of each template vertex through the inverse of the harmonic map.

    The second vertex of each pair copies the first one's position; its own
    location would differ by rounding since Klein barycentrics are not
    preserved by the group.
    """
    coords = np.asarray(coords, float)
    lab = glue_labels(template.mesh.n_vertices, template.pairs)
    _, first = np.unique(lab, return_index=True)
    who = first[lab]
    todo = np.unique(who)
    copy, face, bary = atlas.locate(template.points[todo])
    if np.any(copy < 0):
        raise CoverageError(f"{int(np.count_nonzero(copy < 0))} template vertices fall outside the atlas")
    corners = r.cut.pi_V[atlas.faces[face]]
    X = np.einsum("pk,pkd->pd", bary, coords[corners])
    out = np.empty((template.mesh.n_vertices, coords.shape[1]))
    out[todo] = X
    out = out[who]
    return out


def glue_boundary(template: TemplateMesh, X, tol: float = GLUE_TOL) -> TriMesh:
    """Identify paired boundary vertices; returns the closed mesh with 3D coordinates."""
    for a, b in template.pairs:
        if np.linalg.norm(X[a] - X[b]) > tol:
            raise GlueError(f"paired vertices {a}, {b} are {np.linalg.norm(X[a] - X[b]):.3e} apart")
    lab = glue_labels(template.mesh.n_vertices, template.pairs)
    n = int(lab.max()) + 1
    Y = np.zeros((n, X.shape[1]))
    Y[lab] = X
    out = TriMesh(lab[template.mesh.faces], n, Y)
    if not out.is_closed():
        raise GlueError("glued mesh still has boundary")
    return out


def check_pair_chains(template: TemplateMesh, polygon: FundamentalPolygon):
    """Paired sides must carry the same number of template vertices."""
    count = Counter(s for _, s, _ in template.boundary)
    for i, j in polygon.pairing:
        if count[i] != count[j]:
            raise GlueError(f"sides {i} and {j} carry {count[i]} and {count[j]} vertices")


def base_valence_histogram(template: TemplateMesh, glued: TriMesh, polygon: FundamentalPolygon) -> dict:
    """Valences of the glued corner vertex and its one-ring, for inspecting the base region."""
    lab = glue_labels(template.mesh.n_vertices, template.pairs)
    corner_tags = {v for v, _, t in template.boundary if t in (0.0, 1.0)}
    corner = {int(lab[v]) for v in corner_tags}
    deg = glued.degrees()
    ring = set()
    for c in corner:
        ring.update(glued.neighbors(c))
    return {"corner": sorted(int(deg[c]) for c in corner),
            "ring": dict(sorted(Counter(int(deg[v]) for v in ring).items()))}


def remesh(r: GeodesicRealization, template: TemplateMesh, coords, max_word_len: int = 4) -> TriMesh:
    """Atlas, pull back and glue in one call."""
    check_pair_chains(template, r.polygon)
    samples = coverage_samples(r.polygon, template)
    atlas = build_atlas(r, samples, max_word_len)
    X = pull_back(template, atlas, r, coords)
    return glue_boundary(template, X)
