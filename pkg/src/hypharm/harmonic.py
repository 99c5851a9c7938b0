"""Discrete harmonic maps into a hyperbolic surface by Riemannian gradient descent.

The map is stored as a lift: one disk position per vertex of the cut disk.
Every original vertex has a representative copy; the other copies are images
of it under group elements, so moving only representatives keeps the lift
equivariant.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .cut import CutSurface
from .fuchsian import IDENTITY, FundamentalPolygon
from .hypgeom import (
    DEGENERATE_EDGE,
    MobiusTransform,
    apply_arrays,
    distance_to_geodesic,
    exp_map,
    geodesic_point,
    hyp_distance,
    hyp_inner,
    hyp_norm,
    klein,
    log_map,
    to_origin,
)
from .mesh import TriMesh

log = logging.getLogger(__name__)

CONSTRAINT_TOL = 1e-9
GROUP_TOL = 1e-9


class ConstraintError(RuntimeError):
    pass


class DivergenceError(RuntimeError):
    pass


# ---------------------------------------------------------------- representatives


@dataclass
class RepresentativeScheme:
    """Representative copy of each original vertex and the element reaching every copy.

    ``rep[v]`` is the cut vertex standing for original vertex v.  For every cut
    vertex w, ``rep_of[w]`` is its representative and (``ga[w]``, ``gb[w]``)
    are the coefficients of the element taking the representative's position
    to w's position.
    """

    rep: np.ndarray
    rep_of: np.ndarray
    ga: np.ndarray
    gb: np.ndarray
    words: list

    @property
    def n_reps(self) -> int:
        return len(self.rep)

    def is_rep(self) -> np.ndarray:
        return self.rep_of == np.arange(len(self.rep_of))

    def propagate(self, pos: np.ndarray) -> np.ndarray:
        """Positions of all copies from the representatives'."""
        return apply_arrays(self.ga, self.gb, pos[self.rep_of])

    def pull_back(self, w: np.ndarray, z: np.ndarray) -> np.ndarray:
        """Apply the inverse of the element attached to copy w."""
        return apply_arrays(np.conj(self.ga[w]), -self.gb[w], z)

    def transform(self, w: int) -> MobiusTransform:
        return MobiusTransform(complex(self.ga[w]), complex(self.gb[w]))


def build_scheme(cut: CutSurface, polygon: FundamentalPolygon) -> RepresentativeScheme:
    """Representatives and copy elements from the segment-to-side matching.

    The copy on the lower-indexed segment of a pair represents the vertex;
    the base vertex is represented by the start of segment 0, which sits at
    polygon vertex 0.
    """
    if cut.segment_to_side is None:
        raise ValueError("segments are not matched to polygon sides")
    n = cut.mesh.n_vertices
    links = [[] for _ in range(n)]
    for i, seg in enumerate(cut.segments):
        j = polygon.partner(i)
        if i > j:
            continue
        other = cut.segments[j]
        if len(other) != len(seg):
            raise ValueError(f"paired segments {i}, {j} differ in length")
        t = polygon.side_transform(i)
        ti = t.inverse()
        for u, w in zip(seg, other[::-1]):
            links[u].append((w, t))
            links[w].append((u, ti))

    base = cut.segments[0][0]
    boundary = cut.boundary_vertices()
    rep_of = np.arange(n)
    elem = [None] * n
    for w in range(n):
        if not boundary[w]:
            elem[w] = IDENTITY
    # roots: base copy at vertex 0, then lower-segment copies in segment order
    roots = [base]
    for i, seg in enumerate(cut.segments):
        if i < polygon.partner(i):
            roots.extend(seg[1:-1])
    for r in roots:
        if elem[r] is not None:
            continue
        elem[r] = IDENTITY
        queue = deque([r])
        while queue:
            u = queue.popleft()
            for w, t in links[u]:
                e = t @ elem[u]
                if elem[w] is None:
                    elem[w] = e
                    rep_of[w] = r
                    queue.append(w)
                elif rep_of[w] != r or e.transform.distance_to(elem[w].transform) > GROUP_TOL:
                    raise ValueError(f"inconsistent identification at cut vertex {w}")
    if any(e is None for e in elem):
        raise ValueError("some boundary copies are unreachable from a representative")
    n_orig = int(cut.pi_V.max()) + 1
    rep = np.full(n_orig, -1, dtype=np.int64)
    for w in range(n):
        if rep_of[w] == w:
            v = cut.pi_V[w]
            if rep[v] >= 0:
                raise ValueError(f"original vertex {v} has two representatives")
            rep[v] = w
    if np.any(rep < 0):
        raise ValueError("an original vertex has no representative")
    ga = np.array([e.transform.a for e in elem], dtype=complex)
    gb = np.array([e.transform.b for e in elem], dtype=complex)
    return RepresentativeScheme(rep, rep_of, ga, gb, [e.word for e in elem])


# ---------------------------------------------------------------- realization


@dataclass
class GeodesicRealization:
    """Lift of a map into the disk, one position per cut vertex."""

    positions: np.ndarray
    cut: CutSurface
    polygon: FundamentalPolygon
    weights: np.ndarray
    scheme: RepresentativeScheme
    lift: np.ndarray = field(init=False)

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=complex)
        if np.any(np.abs(self.positions) >= 1):
            raise ValueError("positions must lie strictly inside the unit disk")
        # one cut edge per original edge
        n_e = int(self.cut.pi_E.max()) + 1
        lift = np.full(n_e, -1, dtype=np.int64)
        lift[self.cut.pi_E[::-1]] = np.arange(len(self.cut.pi_E))[::-1]
        self.lift = self.cut.mesh.edges[lift]

    def copy(self, positions=None) -> "GeodesicRealization":
        pos = self.positions.copy() if positions is None else positions
        return GeodesicRealization(pos, self.cut, self.polygon, self.weights, self.scheme)

    def enforce(self):
        self.positions = self.scheme.propagate(self.positions)
        return self

    def constraint_residual(self) -> float:
        """Largest hyperbolic gap between a copy and the image of its representative."""
        target = self.scheme.propagate(self.positions)
        return float(np.max(hyp_distance(self.positions, target)))

    def edge_lengths(self) -> np.ndarray:
        p = self.positions
        return hyp_distance(p[self.lift[:, 0]], p[self.lift[:, 1]])

    def rep_positions(self) -> np.ndarray:
        return self.positions[self.scheme.rep]


def dirichlet_energy(r: GeodesicRealization) -> float:
    """1/2 sum over original edges of c * length^2."""
    return float(0.5 * np.sum(r.weights * r.edge_lengths() ** 2))


def gradient(r: GeodesicRealization, check: bool = True) -> np.ndarray:
    """Riemannian gradient of the energy at each original vertex's representative.

    Entry v is a tangent vector (disk coordinates) at ``positions[rep[v]]``.
    Each edge endpoint's pull is carried back to the representative by the
    inverse of the copy's group element.
    """
    if check:
        res = r.constraint_residual()
        if res > CONSTRAINT_TOL:
            raise ConstraintError(f"hard constraint residual {res:.3e} exceeds {CONSTRAINT_TOL}")
    sch = r.scheme
    p = r.positions
    i, j = r.lift[:, 0], r.lift[:, 1]
    out = np.zeros(sch.n_reps, dtype=complex)
    v_of = r.cut.pi_V
    for a, b in ((i, j), (j, i)):
        base = p[sch.rep_of[a]]
        other = sch.pull_back(a, p[b])
        d = hyp_distance(base, other)
        g = -r.weights * log_map(base, other)
        g = np.where(d < DEGENERATE_EDGE, 0.0, g)
        np.add.at(out, v_of[a], g)
    return out


def grad_msq(r: GeodesicRealization, grad: np.ndarray) -> float:
    """Mean over original vertices of the squared Riemannian gradient norm."""
    return float(np.mean(hyp_norm(r.rep_positions(), grad) ** 2))


def harmonic_residual(r: GeodesicRealization) -> np.ndarray:
    """Per original vertex: hyperbolic norm of sum_j c_ij l_ij U_ij."""
    return hyp_norm(r.rep_positions(), gradient(r))


def directional_derivative(r: GeodesicRealization, direction: np.ndarray) -> float:
    """<gradient, direction> summed over representatives."""
    g = gradient(r)
    return float(np.sum(hyp_inner(r.rep_positions(), g, direction)))


def step(r: GeodesicRealization, direction: np.ndarray, t: float) -> GeodesicRealization:
    """Move representatives along exp(t * direction) and re-propagate copies."""
    pos = r.positions.copy()
    reps = r.scheme.rep
    pos[reps] = exp_map(pos[reps], t * direction)
    out = r.copy(pos)
    return out.enforce()


# ---------------------------------------------------------------- initialization


def place_boundary(cut: CutSurface, polygon: FundamentalPolygon, scheme: RepresentativeScheme,
                   lengths, pos: np.ndarray):
    """Put lower-segment vertices on their sides by cumulative edge length."""
    for k, seg in enumerate(cut.segments):
        if k > polygon.partner(k):
            continue
        v0, v1 = polygon.side(k)
        e = [cut.mesh.edge_between(a, b) for a, b in zip(seg[:-1], seg[1:])]
        seglen = np.asarray(lengths)[cut.pi_E[e]]
        t = np.concatenate([[0.0], np.cumsum(seglen)]) / seglen.sum()
        pts = geodesic_point(v0, v1, t)
        pts[0], pts[-1] = v0, v1
        pos[seg] = pts
    return pos


def initialize_euclidean(cut: CutSurface, polygon: FundamentalPolygon, euclidean_weights,
                         lengths, weights=None, scheme: RepresentativeScheme | None = None
                         ) -> GeodesicRealization:
    """Boundary on the polygon sides, interior by a weighted Laplace solve.

    ``euclidean_weights`` and ``lengths`` are per original edge; ``weights``
    (defaults to the Euclidean ones) are the energy weights stored on the result.
    """
    if scheme is None:
        scheme = build_scheme(cut, polygon)
    m = cut.mesh
    n = m.n_vertices
    pos = np.zeros(n, dtype=complex)
    pos[scheme.rep[cut.base_vertex]] = polygon.vertices[0]
    place_boundary(cut, polygon, scheme, lengths, pos)
    boundary = cut.boundary_vertices()
    # boundary copies follow their representatives exactly
    bidx = np.nonzero(boundary)[0]
    pos[bidx] = apply_arrays(scheme.ga[bidx], scheme.gb[bidx], pos[scheme.rep_of[bidx]])
    w = np.asarray(euclidean_weights, float)[cut.pi_E]
    pos = laplace_solve(m, w, boundary, pos)
    r = GeodesicRealization(pos, cut, polygon, np.asarray(euclidean_weights if weights is None else weights, float),
                            scheme)
    return r.enforce()


def laplace_solve(mesh: TriMesh, w, fixed, values) -> np.ndarray:
    """Weighted harmonic extension of ``values`` on ``fixed`` vertices."""
    n = mesh.n_vertices
    e = mesh.edges
    L = sparse.coo_matrix((np.concatenate([w, w]), (np.concatenate([e[:, 0], e[:, 1]]),
                                                     np.concatenate([e[:, 1], e[:, 0]]))), shape=(n, n)).tocsr()
    L = sparse.diags(np.asarray(L.sum(axis=1)).ravel()) - L
    free = np.nonzero(~fixed)[0]
    fix = np.nonzero(fixed)[0]
    out = np.asarray(values, dtype=complex).copy()
    if len(free) == 0:
        return out
    A = L[free][:, free].tocsc()
    rhs = -(L[free][:, fix] @ out[fix])
    lu = splu(A)
    out[free] = lu.solve(rhs.real) + 1j * lu.solve(rhs.imag)
    if not np.all(np.isfinite(out)):
        raise np.linalg.LinAlgError("Laplace solve broke down")
    return out


# ---------------------------------------------------------------- descent


@dataclass
class OptimizerTrace:
    iteration: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    grad_msq: list = field(default_factory=list)
    max_disp: list = field(default_factory=list)
    wall_ms: list = field(default_factory=list)
    residual: list = field(default_factory=list)
    criterion: str = "max_iter"
    initial_energy: float = float("nan")

    def __len__(self):
        return len(self.iteration)

    def append(self, it, energy, gmsq, disp, wall, residual):
        self.iteration.append(int(it))
        self.energy.append(float(energy))
        self.grad_msq.append(float(gmsq))
        self.max_disp.append(float(disp))
        self.wall_ms.append(float(wall))
        self.residual.append(float(residual))

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\r\n")
            w.writerow(["iter", "energy", "grad_msq", "max_disp", "wall_ms"])
            for row in zip(self.iteration, self.energy, self.grad_msq, self.max_disp, self.wall_ms):
                w.writerow([row[0]] + [repr(x) for x in row[1:]])

    @classmethod
    def read_csv(cls, path) -> "OptimizerTrace":
        out = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                out.append(row["iter"], row["energy"], row["grad_msq"], row["max_disp"], row["wall_ms"], 0.0)
        return out


def weighted_degree(r: GeodesicRealization) -> np.ndarray:
    n = r.scheme.n_reps
    e = r.cut.pi_V[r.lift]
    return np.bincount(e[:, 0], r.weights, n) + np.bincount(e[:, 1], r.weights, n)


DEFAULT_TAU_SCALE = 0.05


def default_tau(r: GeodesicRealization) -> float:
    """Step scaled by the largest weighted vertex degree."""
    return DEFAULT_TAU_SCALE / float(weighted_degree(r).max())


def descend(r: GeodesicRealization, tau: float | None = None, eps_disp: float = 1e-9, eps_grad: float = 1e-12,
            max_iter: int = 200000, backtrack: bool = False, divergence_factor: float = 10.0,
            callback=None) -> tuple[GeodesicRealization, OptimizerTrace]:
    """Gradient descent along exponential maps until a stopping rule fires.

    Each iteration moves every representative by exp(-tau * grad) and
    re-propagates the copies.  Stops when the largest representative move is
    below ``eps_disp`` or the mean squared gradient norm is below
    ``eps_grad``.  Row k of the trace holds the state after k steps.
    """
    if tau is None:
        tau = default_tau(r)
    if tau <= 0:
        raise ValueError("tau must be positive")
    cur = r.copy().enforce()
    trace = OptimizerTrace()
    t0 = time.perf_counter()
    energy = dirichlet_energy(cur)
    trace.initial_energy = energy
    g = gradient(cur)
    gm = grad_msq(cur, g)
    trace.append(0, energy, gm, 0.0, 0.0, cur.constraint_residual())
    if gm < eps_grad:
        trace.criterion = "grad"
        return cur, trace
    for it in range(1, max_iter + 1):
        t = tau
        while True:
            nxt_r = step(cur, -g, t)
            e_new = dirichlet_energy(nxt_r)
            if not backtrack or e_new <= energy or t < 1e-12 * tau:
                break
            t *= 0.5
        disp = float(np.max(hyp_distance(nxt_r.rep_positions(), cur.rep_positions())))
        cur, energy = nxt_r, e_new
        if not np.isfinite(energy) or energy > divergence_factor * trace.initial_energy:
            raise DivergenceError(f"energy {energy:.6g} exceeds {divergence_factor}x the initial "
                                  f"{trace.initial_energy:.6g} at iteration {it}; try a smaller tau")
        res = cur.constraint_residual()
        if res > CONSTRAINT_TOL:
            raise ConstraintError(f"hard constraint residual {res:.3e} at iteration {it}")
        g = gradient(cur, check=False)
        gm = grad_msq(cur, g)
        wall = 1000.0 * (time.perf_counter() - t0)
        trace.append(it, energy, gm, disp, wall, res)
        if callback is not None:
            callback(it, cur, trace)
        if gm < eps_grad:
            trace.criterion = "grad"
            break
        if disp < eps_disp:
            trace.criterion = "disp"
            break
    return cur, trace


def convergence_rate(energies, final_energy: float, floor: float | None = None) -> np.ndarray:
    """Ratios (E_k - E*) / (E_{k-1} - E*) for k >= 1.

    Once a gap drops to ``floor`` (default: a few ulps of E*) the ratios are
    reported as exact zeros.
    """
    e = np.asarray(energies, float)
    if len(e) < 2:
        raise ValueError("need at least two energies")
    if floor is None:
        floor = 8 * np.finfo(float).eps * max(abs(final_energy), 1.0)
    gap = e - final_energy
    out = np.zeros(len(e) - 1)
    for k in range(1, len(e)):
        if gap[k - 1] <= floor or gap[k] <= floor:
            break
        out[k - 1] = gap[k] / gap[k - 1]
    return out


def tail_mean(ratios, fraction: float = 0.1) -> float:
    """Mean of the nonzero ratios over the last ``fraction`` of them."""
    r = np.asarray(ratios, float)
    r = r[r > 0]
    if len(r) == 0:
        return 0.0
    n = max(1, int(np.ceil(fraction * len(r))))
    return float(np.mean(r[-n:]))


# ---------------------------------------------------------------- diagnostics


@dataclass
class EmbeddingReport:
    flipped_face_count: int
    min_signed_area: float
    vertex_angle_sums: np.ndarray

    @property
    def max_angle_error(self) -> float:
        return float(np.max(np.abs(self.vertex_angle_sums - 2 * np.pi)))


def signed_corner_angles(p, q, s) -> np.ndarray:
    """Signed angle at p from the geodesic toward q to the one toward s."""
    return np.angle(to_origin(p, s) / to_origin(p, q))


def check_embedding(r: GeodesicRealization) -> EmbeddingReport:
    """Face orientations and per-vertex angle sums of the lifted triangles."""
    F = r.cut.mesh.faces
    p = r.positions
    a, b, c = p[F[:, 0]], p[F[:, 1]], p[F[:, 2]]
    ka, kb, kc = klein(a), klein(b), klein(c)
    orient = np.sign(((kb - ka).conjugate() * (kc - ka)).imag)
    angles = np.column_stack([signed_corner_angles(a, b, c), signed_corner_angles(b, c, a),
                              signed_corner_angles(c, a, b)])
    area = np.pi - np.abs(angles).sum(axis=1)
    signed_area = np.where(orient > 0, area, -area)
    n = int(r.cut.pi_V.max()) + 1
    sums = np.bincount(r.cut.pi_V[F].ravel(), angles.ravel(), n)
    return EmbeddingReport(int(np.count_nonzero(orient <= 0)), float(signed_area.min()), sums)


def side_distances(r: GeodesicRealization) -> np.ndarray:
    """Hyperbolic distance of each boundary vertex to the geodesic of its side."""
    out = []
    for k, seg in enumerate(r.cut.segments):
        v0, v1 = r.polygon.side(k)
        out.append(distance_to_geodesic(r.positions[seg], v0, v1))
    return np.concatenate(out)


# ---------------------------------------------------------------- IO


def realization_to_json(r: GeodesicRealization, trace: OptimizerTrace | None = None) -> dict:
    cut = r.cut
    data = {
        "positions": [[float(z.real), float(z.imag)] for z in r.positions],
        "criterion": None if trace is None else trace.criterion,
        "iterations": 0 if trace is None else int(trace.iteration[-1]),
        "final_energy": dirichlet_energy(r),
        "weights": [float(x) for x in r.weights],
        "polygon": r.polygon.to_json(),
        "cut": {
            "faces": cut.mesh.faces.tolist(),
            "pi_V": cut.pi_V.tolist(),
            "base_vertex": int(cut.base_vertex),
            "segments": [list(map(int, s)) for s in cut.segments],
            "loops": cut.loops,
        },
    }
    return data


def save_realization(path, r: GeodesicRealization, trace: OptimizerTrace | None = None):
    Path(path).write_text(json.dumps(realization_to_json(r, trace)))


def load_realization(path) -> tuple[GeodesicRealization, dict]:
    data = json.loads(Path(path).read_text())
    polygon = FundamentalPolygon.from_json(data["polygon"])
    c = data["cut"]
    faces = np.array(c["faces"], dtype=np.int64)
    pi_V = np.array(c["pi_V"], dtype=np.int64)
    cmesh = TriMesh(faces, len(pi_V))
    # gluing restores the original faces in order, hence the original edge numbering
    orig = TriMesh(pi_V[faces], int(pi_V.max()) + 1)
    pi_E = orig.he_edge[cmesh.edge_he]
    segs = c["segments"]
    cut = CutSurface(cmesh, pi_V, pi_E, int(c["base_vertex"]), segs,
                     [polygon.partner(k) for k in range(len(segs))], c.get("loops", []), list(range(len(segs))))
    scheme = build_scheme(cut, polygon)
    pos = np.array([complex(x, y) for x, y in data["positions"]])
    r = GeodesicRealization(pos, cut, polygon, np.array(data["weights"], float), scheme)
    return r, data
