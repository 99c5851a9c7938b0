"""Flat hyperbolic metrics by vertex-scaling curvature flow, and edge weights.

Lengths are scaled by ``sinh(l'/2) = exp((u_i + u_j)/2) sinh(l/2)``.  The flow
drives every vertex curvature ``K_i = 2 pi - (angle sum at i)`` to zero with a
damped Newton iteration.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from .hypgeom import InvalidTriangleError, angles_from_lengths
from .mesh import TriMesh, face_edge_lengths, euler_characteristic

log = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    pass


class TriangleDegenerationError(ConvergenceError):
    pass


@dataclass
class FlowResult:
    lengths: np.ndarray
    u: np.ndarray
    curvature: np.ndarray
    iterations: int
    history: list


def corner_angles(mesh: TriMesh, lengths) -> np.ndarray:
    """(F, 3) hyperbolic corner angles; column k is the angle at corner k."""
    L = face_edge_lengths(mesh, lengths)
    A, B, C = angles_from_lengths(L[:, 0], L[:, 1], L[:, 2])
    return np.column_stack([A, B, C])


def euclidean_corner_angles(mesh: TriMesh, lengths) -> np.ndarray:
    L = face_edge_lengths(mesh, lengths)
    a, b, c = L[:, 0], L[:, 1], L[:, 2]
    if np.any((a >= b + c) | (b >= a + c) | (c >= a + b)):
        raise InvalidTriangleError("Euclidean triangle inequality violated")
    out = []
    for x, y, z in ((a, b, c), (b, c, a), (c, a, b)):
        cos = (y * y + z * z - x * x) / (2 * y * z)
        out.append(np.arccos(np.clip(cos, -1.0, 1.0)))
    return np.column_stack(out)


def vertex_curvature(mesh: TriMesh, lengths) -> np.ndarray:
    ang = corner_angles(mesh, lengths)
    total = np.bincount(mesh.faces.reshape(-1), weights=ang.reshape(-1), minlength=mesh.n_vertices)
    return 2 * np.pi - total


def face_areas(mesh: TriMesh, lengths) -> np.ndarray:
    return np.pi - corner_angles(mesh, lengths).sum(axis=1)


def gauss_bonnet_residual(mesh: TriMesh, lengths) -> float:
    """sum K - sum Area - 2 pi chi; zero for every valid metric."""
    K = vertex_curvature(mesh, lengths)
    A = face_areas(mesh, lengths)
    return float(K.sum() - A.sum() - 2 * np.pi * euler_characteristic(mesh))


def scale_lengths(mesh: TriMesh, lengths, u) -> np.ndarray:
    e = mesh.edges
    s = np.exp(0.5 * (u[e[:, 0]] + u[e[:, 1]])) * np.sinh(0.5 * np.asarray(lengths))
    return 2 * np.arcsinh(s)


def _valid(mesh, lengths):
    L = face_edge_lengths(mesh, lengths)
    a, b, c = L[:, 0], L[:, 1], L[:, 2]
    return bool(np.all((a < b + c) & (b < a + c) & (c < a + b) & (L.min(axis=1) > 0)))


def curvature_jacobian(mesh: TriMesh, lengths) -> sparse.csr_matrix:
    """dK/du for the sinh scaling, evaluated at the given lengths."""
    L = face_edge_lengths(mesh, lengths)
    ang = corner_angles(mesh, lengths)
    F = mesh.faces
    rows, cols, vals = [], [], []
    sh = np.sinh(L)
    # d(side m)/d(u at corner n) = tanh(side/2) if corner n is an endpoint of side m
    dl = np.tanh(0.5 * L)
    for m in range(3):
        m1, m2 = (m + 1) % 3, (m + 2) % 3
        # d(angle m)/d(opposite side) and the adjacent sides
        d_opp = sh[:, m] / (sh[:, m1] * sh[:, m2] * np.sin(ang[:, m]))
        d_side = {m: d_opp, m1: -d_opp * np.cos(ang[:, m2]), m2: -d_opp * np.cos(ang[:, m1])}
        for n in range(3):
            # sides having corner n as an endpoint: the two sides not opposite n
            g = np.zeros(len(F))
            for s in range(3):
                if s != n:
                    g += d_side[s] * dl[:, s]
            rows.append(F[:, m])
            cols.append(F[:, n])
            vals.append(-g)
    n = mesh.n_vertices
    J = sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    return J.tocsr()


def hyperbolic_yamabe_flow(mesh: TriMesh, lengths, tol: float = 1e-10, max_iter: int = 50,
                           normalize_start: bool = True) -> FlowResult:
    """Conformal factors u with max |K| <= tol for the sinh-scaled metric."""
    l0 = np.asarray(lengths, dtype=float)
    n = mesh.n_vertices
    u = np.zeros(n)
    K = vertex_curvature(mesh, l0)
    history = [float(np.abs(K).max())]
    if history[0] <= tol:
        return FlowResult(l0.copy(), u, K, 0, history)
    if normalize_start:
        shift = _area_matching_shift(mesh, l0)
        # sinh scaling is not proportional for long edges; back off until faces stay valid
        while shift != 0.0 and not _valid(mesh, scale_lengths(mesh, l0, np.full(n, shift))):
            shift = 0.0 if abs(shift) < 1e-6 else 0.5 * shift
        u[:] = shift
        K = vertex_curvature(mesh, scale_lengths(mesh, l0, u))
        history.append(float(np.abs(K).max()))
    for it in range(1, max_iter + 1):
        l = scale_lengths(mesh, l0, u)
        err = float(np.abs(K).max())
        if err <= tol:
            return FlowResult(l, u, K, it - 1, history)
        try:
            J = curvature_jacobian(mesh, l)
            du = -spsolve(J.tocsc(), K)
            if not np.all(np.isfinite(du)):
                raise np.linalg.LinAlgError("non-finite Newton step")
        except (RuntimeError, np.linalg.LinAlgError) as exc:
            log.warning("Newton solve failed (%s); taking a gradient step", exc)
            du = -K
        t = 1.0
        while True:
            u_new = u + t * du
            l_new = scale_lengths(mesh, l0, u_new)
            if _valid(mesh, l_new):
                K_new = vertex_curvature(mesh, l_new)
                if np.abs(K_new).max() < err:
                    break
            t *= 0.5
            if t < 1e-12:
                raise TriangleDegenerationError(f"line search failed at iteration {it} (max|K| = {err:.3e})")
        u, K = u_new, K_new
        history.append(float(np.abs(K).max()))
        log.debug("flow iteration %d: max|K| = %.3e (step %.3g)", it, history[-1], t)
    l = scale_lengths(mesh, l0, u)
    if float(np.abs(K).max()) <= tol:
        return FlowResult(l, u, K, max_iter, history)
    raise ConvergenceError(f"max|K| = {np.abs(K).max():.3e} after {max_iter} iterations")


def _area_matching_shift(mesh, l0):
    """Uniform u that brings the Euclidean area near 4 pi (g - 1)."""
    L = face_edge_lengths(mesh, l0)
    a, b, c = L[:, 0], L[:, 1], L[:, 2]
    s = 0.5 * (a + b + c)
    area = np.sqrt(np.maximum(s * (s - a) * (s - b) * (s - c), 0)).sum()
    target = -2 * np.pi * euler_characteristic(mesh)
    if target <= 0 or area <= 0:
        return 0.0
    # lengths scale by roughly exp(u) when small; area by exp(2u)
    return 0.5 * np.log(target / area)


def _edge_face_terms(mesh: TriMesh, angles) -> np.ndarray:
    """Per halfedge: tan((a_i + a_j - a_k)/2) for edge ij opposite corner k."""
    i, j, k = angles[:, 0], angles[:, 1], angles[:, 2]
    # halfedge 0: corner 0 -> 1, opposite corner 2
    t0 = np.tan(0.5 * (i + j - k))
    t1 = np.tan(0.5 * (j + k - i))
    t2 = np.tan(0.5 * (k + i - j))
    return np.column_stack([t0, t1, t2]).reshape(-1)


def _edge_half_angles(mesh: TriMesh, angles) -> np.ndarray:
    i, j, k = angles[:, 0], angles[:, 1], angles[:, 2]
    return 0.5 * np.column_stack([i + j - k, j + k - i, k + i - j]).reshape(-1)


def _sum_per_edge(mesh: TriMesh, per_halfedge):
    return np.bincount(mesh.he_edge, weights=per_halfedge, minlength=mesh.n_edges)


def canonical_weights(mesh: TriMesh, lengths) -> np.ndarray:
    """Hyperbolic cotangent-type weights of a (flat) hyperbolic metric."""
    lengths = np.asarray(lengths, float)
    terms = _edge_face_terms(mesh, corner_angles(mesh, lengths))
    return _sum_per_edge(mesh, terms) * np.tanh(0.5 * lengths) / lengths


def euclidean_cotangent_weights(mesh: TriMesh, lengths) -> np.ndarray:
    ang = euclidean_corner_angles(mesh, lengths)
    # cot of the angle opposite each halfedge
    cot = 1.0 / np.tan(ang[:, [2, 0, 1]]).reshape(-1)
    return 0.5 * _sum_per_edge(mesh, cot)


def delaunay_margin(mesh: TriMesh, lengths) -> np.ndarray:
    """Per edge: sum over adjacent faces of (a_i + a_j - a_k)/2."""
    return _sum_per_edge(mesh, _edge_half_angles(mesh, corner_angles(mesh, lengths)))


def is_delaunay_edge(mesh: TriMesh, lengths, edge: int | None = None):
    m = delaunay_margin(mesh, lengths)
    return bool(m[edge] >= 0) if edge is not None else m >= 0


def default_weight_floor(weights) -> float:
    pos = np.asarray(weights)[np.asarray(weights) > 0]
    if len(pos) == 0:
        raise ValueError("no positive weights to derive a floor from")
    return float(np.percentile(pos, 5))


def apply_positivity_policy(weights, floor: float | None = None) -> tuple[np.ndarray, int]:
    """Raise every weight below ``floor`` to ``floor``; returns (weights, count reset)."""
    w = np.asarray(weights, dtype=float)
    if floor is None:
        floor = default_weight_floor(w)
    if floor <= 0:
        raise ValueError("floor must be positive")
    low = w < floor
    out = w.copy()
    out[low] = floor
    return out, int(np.count_nonzero(low))


def dump_json(path, u=None, K=None, c=None, **extra):
    data = {}
    for key, val in (("u", u), ("K", K), ("c", c)):
        if val is not None:
            data[key] = [float(x) for x in val]
    data.update(extra)
    Path(path).write_text(json.dumps(data, indent=1))
