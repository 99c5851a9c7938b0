"""Cutting a closed surface into a disk along a one-point system of loops.

The loops all start and end at one base vertex and are otherwise disjoint.
Their ends are arranged around the base vertex in interlaced blocks
``a_out, b_in, a_in, b_out``, one block per handle, which makes the cut
surface a single disk whose boundary reads a1 b1 a1^-1 b1^-1 a2 b2 ...
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.cluster.hierarchy import DisjointSet
from scipy.sparse import csgraph

from .fuchsian import FundamentalPolygon
from .mesh import TopologyError, TriMesh, check_closed_surface, euler_characteristic


class CutError(TopologyError):
    pass


# ---------------------------------------------------------------- Z2 homology


def spanning_tree(mesh: TriMesh, root: int) -> np.ndarray:
    """Edge mask of a breadth-first spanning tree."""
    in_tree = np.zeros(mesh.n_edges, dtype=bool)
    seen = np.zeros(mesh.n_vertices, dtype=bool)
    seen[root] = True
    queue = deque([root])
    while queue:
        v = queue.popleft()
        for h in mesh.outgoing(v):
            w = mesh.he_dest[h]
            if not seen[w]:
                seen[w] = True
                in_tree[mesh.he_edge[h]] = True
                queue.append(w)
    return in_tree


def tree_cotree(mesh: TriMesh, root: int):
    """(tree mask, dual-tree parent map, leftover edges) of a tree-cotree split."""
    tree = spanning_tree(mesh, root)
    nf = mesh.n_faces
    parent = np.full(nf, -1, dtype=np.int64)  # parent edge in the dual tree
    seen = np.zeros(nf, dtype=bool)
    cotree = np.zeros(mesh.n_edges, dtype=bool)
    seen[0] = True
    queue = deque([0])
    while queue:
        f = queue.popleft()
        for h in range(3 * f, 3 * f + 3):
            e = mesh.he_edge[h]
            if tree[e]:
                continue
            g = mesh.twin[h] // 3
            if not seen[g]:
                seen[g] = True
                parent[g] = e
                cotree[e] = True
                queue.append(g)
    leftover = np.nonzero(~tree & ~cotree)[0]
    return tree, parent, leftover


def _dual_path_to_root(mesh: TriMesh, parent, f):
    edges = []
    while parent[f] >= 0:
        e = parent[f]
        edges.append(int(e))
        h = mesh.edge_he[e]
        a, b = h // 3, mesh.twin[h] // 3
        f = b if a == f else a
    return edges


def cocycle_masks(mesh: TriMesh, root: int = 0) -> np.ndarray:
    """Per-edge bit masks; bit j is set when the edge crosses the j-th dual loop.

    The parity of a closed edge walk against bit j is its Z2 intersection
    number with a dual homology basis, so a closed walk is Z2-trivial iff its
    accumulated mask is zero.
    """
    _, parent, leftover = tree_cotree(mesh, root)
    masks = np.zeros(mesh.n_edges, dtype=np.int64)
    for j, e in enumerate(leftover):
        h = mesh.edge_he[e]
        p1 = _dual_path_to_root(mesh, parent, h // 3)
        p2 = _dual_path_to_root(mesh, parent, mesh.twin[h] // 3)
        crossed = set(p1) ^ set(p2)
        crossed.add(int(e))
        for c in crossed:
            masks[c] |= 1 << j
    return masks


def loop_mask(mesh: TriMesh, masks, loop) -> int:
    m = 0
    for u, v in zip(loop[:-1], loop[1:]):
        m ^= int(masks[mesh.edge_between(u, v)])
    return m


# ---------------------------------------------------------------- loop search


def _unwind(pred, v):
    path = []
    while v >= 0:
        path.append(int(v))
        v = pred[v]
    return path[::-1]


class _LoopSearch:
    """Shortest-path queries on the mesh graph and its Z2-parity cover."""

    def __init__(self, mesh: TriMesh, base: int):
        self.mesh = mesh
        self.base = base
        self.masks = cocycle_masks(mesh, root=base)
        self.n_bits = int(self.masks.max()).bit_length()
        self.n_states = 1 << self.n_bits
        self.e = mesh.edges
        # both directions of every lifted edge, built once and filtered per query
        n, k = mesh.n_vertices, self.n_states
        u, v, m = self.e[:, 0], self.e[:, 1], self.masks
        self._lifted = self._directed([u * k + s for s in range(k)], [v * k + (s ^ m) for s in range(k)],
                                      [u] * k, [v] * k, n * k)
        self._plain = self._directed([u], [v], [u], [v], n)

    @staticmethod
    def _directed(rows, cols, ru, rv, size):
        r, c = np.concatenate(rows), np.concatenate(cols)
        a, b = np.concatenate(ru), np.concatenate(rv)
        r, c, a, b = np.concatenate([r, c]), np.concatenate([c, r]), np.concatenate([a, b]), np.concatenate([b, a])
        order = np.lexsort((c, r))
        return r[order], c[order], a[order], b[order], size

    def _graph(self, blocked, lift):
        r, c, a, b, size = self._lifted if lift else self._plain
        keep = ~(blocked[a] | blocked[b])
        indptr = np.zeros(size + 1, dtype=np.int64)
        np.cumsum(np.bincount(r[keep], minlength=size), out=indptr[1:])
        return sparse.csr_matrix((np.ones(int(indptr[-1])), c[keep], indptr), shape=(size, size))

    def nontrivial_path(self, x, y, blocked):
        """Shortest simple x -> y path whose closure through the base is Z2-nontrivial."""
        mesh, k = self.mesh, self.n_states
        blk = blocked.copy()
        blk[[x, y]] = False
        A = self._graph(blk, lift=True)
        m0 = int(self.masks[mesh.edge_between(self.base, x)])
        m_end = int(self.masks[mesh.edge_between(y, self.base)])
        dist, pred = csgraph.shortest_path(A, unweighted=True, indices=x * k + m0, return_predecessors=True)
        ends = [y * k + s for s in range(k) if s ^ m_end and np.isfinite(dist[y * k + s])]
        for node in sorted(ends, key=lambda q: dist[q]):
            path = [q // k for q in _unwind(pred, node)]
            if len(set(path)) == len(path):
                return path
        return None

    def connecting_path(self, sources, target, blocked):
        blk = blocked.copy()
        blk[list(sources) + [target]] = False
        A = self._graph(blk, lift=False)
        dist, pred, src = csgraph.dijkstra(A, unweighted=True, indices=list(sources),
                                          return_predecessors=True, min_only=True)
        if not np.isfinite(dist[target]):
            return None
        return _unwind(pred, target)


def default_base_vertex(mesh: TriMesh) -> int:
    """Vertex of maximal degree, lowest index on ties."""
    return int(np.argmax(mesh.degrees()))


def homology_basis(mesh: TriMesh, base: int | None = None, max_attempts: int = 200) -> list[list[int]]:
    """2g simple loops through ``base``, pairwise meeting only at ``base``.

    Returned as vertex sequences [base, ..., base] in the order
    a1, b1, a2, b2, ... with interlaced ends around the base vertex.
    Handles are placed greedily in consecutive windows of the base vertex's
    one-ring; every start rotation of the ring is tried before giving up.
    """
    g = check_closed_surface(mesh)
    if base is None:
        base = default_base_vertex(mesh)
    ring = mesh.neighbors(base)
    d = len(ring)
    if d < 4 * g:
        raise CutError(f"base vertex {base} has degree {d}; at least {4 * g} is needed")
    finder = _LoopSearch(mesh, base)
    ring_mask = np.zeros(mesh.n_vertices, dtype=bool)
    ring_mask[ring] = True
    ring_mask[base] = True
    budget = [0]

    def search(k, start, order, used):
        if k == g:
            return []
        last = d - 1 - 4 * (g - k - 1)  # leave room for the remaining handles
        for span in range(2, last - start):
            for xi in range(start, last - span):
                yi = xi + span
                budget[0] += 1
                if budget[0] > max_attempts:
                    return None
                blocked = used | ring_mask
                a = finder.nontrivial_path(order[xi], order[yi], blocked)
                if a is None:
                    continue
                blocked_b = blocked.copy()
                blocked_b[a] = True
                for bo in range(yi + 1, last + 1):
                    b = finder.connecting_path(order[xi + 1 : yi], order[bo], blocked_b)
                    if b is None:
                        continue
                    now = used.copy()
                    now[a] = True
                    now[b] = True
                    rest = search(k + 1, bo + 1, order, now)
                    if rest is not None:
                        return [[base] + a + [base], [base] + b + [base]] + rest
                    break
        return None

    for rot in range(d):
        budget[0] = 0
        order = ring[rot:] + ring[:rot]
        loops = search(0, 0, order, np.zeros(mesh.n_vertices, dtype=bool))
        if loops is not None:
            return loops
    raise CutError("could not find a one-point system of loops at the base vertex")


# ---------------------------------------------------------------- cutting


@dataclass
class CutSurface:
    """Disk obtained by cutting; boundary split into segments at base copies.

    ``segments[k]`` lists cut-mesh vertices along the boundary (faces on the
    left) from one base copy to the next.  ``segment_pairing[k]`` is the
    segment carrying the same loop side, traversed in the opposite direction.
    """

    mesh: TriMesh
    pi_V: np.ndarray
    pi_E: np.ndarray
    base_vertex: int
    segments: list[list[int]]
    segment_pairing: list[int]
    loops: list[list[int]] = field(default_factory=list)
    segment_to_side: list[int] | None = None

    @property
    def n_segments(self) -> int:
        return len(self.segments)

    def base_copies(self) -> list[int]:
        """Cut vertex at the start of each segment."""
        return [s[0] for s in self.segments]

    def boundary_vertices(self) -> np.ndarray:
        out = np.zeros(self.mesh.n_vertices, dtype=bool)
        for s in self.segments:
            out[s] = True
        return out

    def dump_json(self, path):
        data = {
            "loops": [[int(v) for v in loop] for loop in self.loops],
            "segments": [[int(v) for v in s] for s in self.segments],
            "segment_to_side": None if self.segment_to_side is None else list(map(int, self.segment_to_side)),
        }
        Path(path).write_text(json.dumps(data, indent=1))


def cut_along(mesh: TriMesh, loops) -> CutSurface:
    """Duplicate vertices along the loops so the surface opens into a disk."""
    base = int(loops[0][0])
    cut_edges = np.zeros(mesh.n_edges, dtype=bool)
    for loop in loops:
        if loop[0] != base or loop[-1] != base:
            raise CutError("every loop must start and end at the base vertex")
        for u, v in zip(loop[:-1], loop[1:]):
            e = mesh.edge_between(int(u), int(v))
            if e < 0:
                raise CutError(f"loop step {u}-{v} is not a mesh edge")
            cut_edges[e] = True
    # corner c = halfedge index; its vertex is he_origin[c]
    nh = mesh.n_halfedges
    ds = DisjointSet(range(nh))
    for h in range(nh):
        if cut_edges[mesh.he_edge[h]]:
            continue
        # corner at origin(h) in this face and across edge h
        t = mesh.twin[h]
        ds.merge(h, int(t - t % 3 + (t + 1) % 3))
    roots = {}
    corner_vertex = np.empty(nh, dtype=np.int64)
    for h in range(nh):
        r = ds[h]
        if r not in roots:
            roots[r] = len(roots)
        corner_vertex[h] = roots[r]
    n_cut = len(roots)
    pi_V = np.empty(n_cut, dtype=np.int64)
    pi_V[corner_vertex] = mesh.he_origin
    faces = corner_vertex.reshape(-1, 3)
    coords = None if mesh.coords is None else mesh.coords[pi_V]
    cmesh = TriMesh(faces, n_cut, coords)
    # same halfedge numbering, so edges project through the shared index
    pi_E = mesh.he_edge[cmesh.edge_he]

    if euler_characteristic(cmesh) != 1:
        raise CutError(f"cut surface has Euler characteristic {euler_characteristic(cmesh)}, not 1")
    bloops = cmesh.boundary_loops()
    if len(bloops) != 1:
        raise CutError(f"cut surface has {len(bloops)} boundary cycles")
    cycle = bloops[0]
    is_base = pi_V[cmesh.he_origin[cycle]] == base
    starts = np.nonzero(is_base)[0]
    if len(starts) != 2 * len(loops):
        raise CutError("unexpected number of base copies on the boundary")
    cycle = cycle[starts[0]:] + cycle[: starts[0]]
    is_base = np.roll(is_base, -starts[0])
    segments, seg_edges = [], []
    for h, b in zip(cycle, is_base):
        if b:
            segments.append([int(cmesh.he_origin[h])])
            seg_edges.append([])
        segments[-1].append(int(cmesh.he_dest[h]))
        seg_edges[-1].append(int(pi_E[cmesh.he_edge[h]]))
    owner = {}
    for k, es in enumerate(seg_edges):
        owner.setdefault(es[0], []).append(k)
    pairing = [-1] * len(segments)
    for k, es in enumerate(seg_edges):
        other = [j for j in owner[es[-1]] if j != k]
        if len(other) != 1:
            raise CutError("boundary segments do not pair up")
        j = other[0]
        if seg_edges[j] != es[::-1]:
            raise CutError(f"segments {k} and {j} are not reversed copies")
        pairing[k] = j
    return CutSurface(cmesh, pi_V, pi_E, base, segments, pairing, [list(map(int, l)) for l in loops])


def match_segments_to_sides(cut: CutSurface, polygon: FundamentalPolygon) -> CutSurface:
    """Renumber segments cyclically so segment k lies on polygon side k.

    The first rotation for which the segment pairing equals the side pairing
    is used.  Returns a new CutSurface; ``segment_to_side`` is the identity.
    """
    n = cut.n_segments
    if n != polygon.n_sides:
        raise CutError(f"{n} segments for a {polygon.n_sides}-gon")
    for r in range(n):
        ok = all((cut.segment_pairing[(k + r) % n] - r) % n == polygon.partner(k) for k in range(n))
        if ok:
            segs = [cut.segments[(k + r) % n] for k in range(n)]
            pairing = [polygon.partner(k) for k in range(n)]
            return CutSurface(cut.mesh, cut.pi_V, cut.pi_E, cut.base_vertex, segs, pairing, cut.loops,
                              list(range(n)))
    raise CutError("segment pairing does not match the polygon pairing in any rotation")


def cut_surface(mesh: TriMesh, polygon: FundamentalPolygon, base: int | None = None) -> CutSurface:
    """Loops, cut and side matching in one call."""
    return match_segments_to_sides(cut_along(mesh, homology_basis(mesh, base)), polygon)


def glue(cut: CutSurface) -> tuple[np.ndarray, np.ndarray]:
    """Faces of the re-glued surface on compact labels, and the label of each cut vertex.

    Gluing identifies vertices with equal projection, so this relabels the
    cut faces through ``pi_V`` onto 0..n-1 in first-appearance order.
    """
    _, first, inv = np.unique(cut.pi_V, return_index=True, return_inverse=True)
    return inv[cut.mesh.faces], inv
