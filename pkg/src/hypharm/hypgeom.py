"""Poincare disk kernel: distances, isometries, exponential/log maps, trigonometry.

Points are handled as complex numbers (scalars or numpy arrays), which keeps
Mobius arithmetic short and vectorizes cleanly.  ``DiskPoint`` and
``TangentVec`` are thin immutable wrappers for the scalar API; every function
also accepts plain complex values or complex arrays.

Tangent vectors are stored by their Euclidean disk components.  The hyperbolic
norm of ``v`` at ``p`` is ``2|v| / (1 - |p|^2)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEGENERATE_EDGE = 1e-14
COS_CLAMP_TOL = 1e-12


class DomainError(ValueError):
    """A point lies on or outside the unit circle."""


class DegenerateEdgeError(ValueError):
    """Two points are too close for a direction to be defined."""


class InvalidTriangleError(ValueError):
    """Side lengths violate the strict triangle inequality."""


@dataclass(frozen=True)
class DiskPoint:
    x: float
    y: float

    def __post_init__(self):
        if self.x * self.x + self.y * self.y >= 1.0:
            raise DomainError(f"point ({self.x}, {self.y}) is not inside the unit disk")

    @property
    def z(self) -> complex:
        return complex(self.x, self.y)

    @classmethod
    def from_complex(cls, z: complex) -> "DiskPoint":
        return cls(float(np.real(z)), float(np.imag(z)))


@dataclass(frozen=True)
class TangentVec:
    base: DiskPoint
    vx: float
    vy: float

    @property
    def v(self) -> complex:
        return complex(self.vx, self.vy)

    def norm(self) -> float:
        return hyp_norm(self.base, self.v)


@dataclass(frozen=True)
class MobiusTransform:
    """Disk automorphism z -> (a z + b) / (conj(b) z + conj(a)), |a|^2 - |b|^2 = 1."""

    a: complex
    b: complex

    @classmethod
    def identity(cls) -> "MobiusTransform":
        return cls(1 + 0j, 0j)

    @classmethod
    def normalized(cls, a: complex, b: complex) -> "MobiusTransform":
        det = abs(a) ** 2 - abs(b) ** 2
        if det <= 0:
            raise ValueError("coefficients do not describe a disk automorphism")
        s = np.sqrt(det)
        return cls(complex(a / s), complex(b / s))

    @classmethod
    def translation(cls, p) -> "MobiusTransform":
        """Hyperbolic translation taking 0 to p along the diameter through p."""
        p = _z(p)
        return cls.normalized(1 + 0j, p)

    @classmethod
    def rotation(cls, theta: float) -> "MobiusTransform":
        return cls(complex(np.exp(0.5j * theta)), 0j)

    def __call__(self, z):
        return mobius_apply(self, z)

    def __matmul__(self, other: "MobiusTransform") -> "MobiusTransform":
        return mobius_compose(self, other)

    def inverse(self) -> "MobiusTransform":
        return mobius_inverse(self)

    def derivative(self, z):
        """Complex derivative at z; pushes tangent vectors forward."""
        z = _z(z)
        return 1.0 / (np.conj(self.b) * z + np.conj(self.a)) ** 2

    def trace(self) -> float:
        """Trace of the SU(1,1) matrix [[a, b], [conj b, conj a]]."""
        return 2.0 * self.a.real

    def canonical(self) -> "MobiusTransform":
        """Representative of the +/- pair with Re a > 0 (ties: Im a > 0)."""
        a, b = self.a, self.b
        if a.real < 0 or (a.real == 0 and a.imag < 0):
            return MobiusTransform(-a, -b)
        return self

    def coefficients(self) -> tuple[float, float, float, float]:
        return (self.a.real, self.a.imag, self.b.real, self.b.imag)

    def distance_to(self, other: "MobiusTransform") -> float:
        """Coefficient distance, insensitive to the global sign."""
        d1 = max(abs(self.a - other.a), abs(self.b - other.b))
        d2 = max(abs(self.a + other.a), abs(self.b + other.b))
        return min(d1, d2)


def _z(p):
    if isinstance(p, DiskPoint):
        return p.z
    if isinstance(p, TangentVec):
        return p.v
    return p


def _check_inside(*zs):
    for z in zs:
        if np.any(np.abs(z) >= 1.0):
            raise DomainError("point is not strictly inside the unit disk")


def delta(p, q):
    """2|p-q|^2 / ((1-|p|^2)(1-|q|^2)); cosh(d(p,q)) - 1."""
    p, q = _z(p), _z(q)
    _check_inside(p, q)
    return 2.0 * np.abs(p - q) ** 2 / ((1.0 - np.abs(p) ** 2) * (1.0 - np.abs(q) ** 2))


def arcosh1p(x):
    """arcosh(1 + x), accurate for small x."""
    return np.log1p(x + np.sqrt(x * x + 2.0 * x))


def hyp_distance(p, q):
    return arcosh1p(delta(p, q))


def mobius_apply(m: MobiusTransform, z):
    z = _z(z)
    return (m.a * z + m.b) / (np.conj(m.b) * z + np.conj(m.a))


def mobius_compose(m1: MobiusTransform, m2: MobiusTransform) -> MobiusTransform:
    """m1 after m2."""
    a = m1.a * m2.a + m1.b * np.conj(m2.b)
    b = m1.a * m2.b + m1.b * np.conj(m2.a)
    return MobiusTransform.normalized(a, b)


def mobius_inverse(m: MobiusTransform) -> MobiusTransform:
    return MobiusTransform(complex(np.conj(m.a)), -m.b)


def mobius_arrays(ms) -> tuple[np.ndarray, np.ndarray]:
    """Stack transforms into coefficient arrays for vectorized application."""
    a = np.array([m.a for m in ms], dtype=complex)
    b = np.array([m.b for m in ms], dtype=complex)
    return a, b


def apply_arrays(a, b, z):
    return (a * z + b) / (np.conj(b) * z + np.conj(a))


def to_origin(p, z):
    """Image of z under the isometry taking p to 0."""
    return (z - p) / (1.0 - np.conj(p) * z)


def from_origin(p, w):
    """Inverse of ``to_origin``."""
    return (w + p) / (1.0 + np.conj(p) * w)


def hyp_norm(p, v):
    p, v = _z(p), _z(v)
    return 2.0 * np.abs(v) / (1.0 - np.abs(p) ** 2)


def hyp_inner(p, v, w):
    """Riemannian inner product of tangent vectors v, w at p."""
    p, v, w = _z(p), _z(v), _z(w)
    lam = 2.0 / (1.0 - np.abs(p) ** 2)
    return lam * lam * np.real(v * np.conj(w))


def exp_map(p, v):
    """Endpoint of the geodesic from p with initial velocity v."""
    p, v = _z(p), _z(v)
    _check_inside(p)
    r = np.abs(v)
    s = 1.0 - np.abs(p) ** 2
    with np.errstate(invalid="ignore", divide="ignore"):
        w = np.where(r > 0, np.tanh(r / s) * v / np.where(r > 0, r, 1.0), 0.0)
    out = from_origin(p, w)
    if np.ndim(out) == 0:
        return complex(out)
    return out


def log_map(p, q):
    """Tangent vector at p whose geodesic reaches q at time one."""
    p, q = _z(p), _z(q)
    _check_inside(p, q)
    w = to_origin(p, q)
    r = np.abs(w)
    s = 1.0 - np.abs(p) ** 2
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(r > 0, s * np.arctanh(np.minimum(r, 1.0)) * w / np.where(r > 0, r, 1.0), 0.0)
    if np.ndim(out) == 0:
        return complex(out)
    return out


def geodesic_unit_tangent(p, q) -> TangentVec:
    """Unit tangent at p of the geodesic running from p to q."""
    pz, qz = _z(p), _z(q)
    if hyp_distance(pz, qz) < DEGENERATE_EDGE:
        raise DegenerateEdgeError("edge is too short to define a direction")
    w = to_origin(pz, qz)
    u = 0.5 * (1.0 - abs(pz) ** 2) * w / abs(w)
    return TangentVec(DiskPoint.from_complex(pz), u.real, u.imag)


def unit_tangents(p, q):
    """Vectorized unit tangents; zero where the edge is degenerate."""
    w = to_origin(p, q)
    r = np.abs(w)
    ok = hyp_distance(p, q) >= DEGENERATE_EDGE
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(ok, 0.5 * (1.0 - np.abs(p) ** 2) * w / np.where(r > 0, r, 1.0), 0.0)


def hyp_law_of_cosines(b: float, c: float, A: float) -> float:
    """Side opposite angle A given the two adjacent sides."""
    x = np.cosh(b) * np.cosh(c) - np.sinh(b) * np.sinh(c) * np.cos(A)
    return float(np.arccosh(max(x, 1.0)))


def _check_triangles(a, b, c):
    a, b, c = np.asarray(a, float), np.asarray(b, float), np.asarray(c, float)
    bad = ~((a > 0) & (b > 0) & (c > 0) & (a < b + c) & (b < c + a) & (c < a + b))
    if np.any(bad):
        raise InvalidTriangleError(f"{int(np.count_nonzero(bad))} triangle(s) violate the triangle inequality")
    return a, b, c


def _opposite_angle(a, b, c):
    """Angle opposite side a; half-angle form stays accurate for tiny triangles."""
    # tan^2(A/2) = sinh(s-b) sinh(s-c) / (sinh s sinh(s-a))
    s = 0.5 * (a + b + c)
    num = np.sinh(s - b) * np.sinh(s - c)
    den = np.sinh(s) * np.sinh(s - a)
    return 2.0 * np.arctan(np.sqrt(np.maximum(num, 0.0) / den))


def angles_from_lengths(a, b, c):
    """Angles (A, B, C) opposite sides (a, b, c) of hyperbolic triangles.

    Works elementwise on arrays.  Raises ``InvalidTriangleError`` if any triple
    fails the strict triangle inequality.
    """
    a, b, c = _check_triangles(a, b, c)
    A = _opposite_angle(a, b, c)
    B = _opposite_angle(b, c, a)
    C = _opposite_angle(c, a, b)
    if A.ndim == 0:
        return float(A), float(B), float(C)
    return A, B, C


def angle_from_cosine_law(a, b, c):
    """Angle opposite a by the plain law of cosines (clamped arccos)."""
    a, b, c = _check_triangles(a, b, c)
    x = (np.cosh(b) * np.cosh(c) - np.cosh(a)) / (np.sinh(b) * np.sinh(c))
    if np.any(np.abs(x) > 1.0 + COS_CLAMP_TOL):
        raise InvalidTriangleError("cosine outside [-1, 1]")
    return np.arccos(np.clip(x, -1.0, 1.0))


def triangle_area(a, b, c):
    """Area of a hyperbolic triangle: pi minus its angle sum."""
    A, B, C = angles_from_lengths(a, b, c)
    return np.pi - (np.asarray(A) + B + C)


def klein(z):
    """Poincare -> Klein coordinates."""
    return 2.0 * z / (1.0 + np.abs(z) ** 2)


def from_klein(k):
    r2 = np.abs(k) ** 2
    return k / (1.0 + np.sqrt(np.maximum(1.0 - r2, 0.0)))


def geodesic_through(p, q):
    """Circle (center, radius) orthogonal to the unit circle through p and q.

    Returns ``None`` when p, q lie on a common diameter.
    """
    p, q = complex(_z(p)), complex(_z(q))
    # the geodesic circle also passes through the inversion 1/conj(p)
    cross = p.real * q.imag - p.imag * q.real
    if abs(cross) < 1e-14:
        return None
    # center c satisfies Re(c conj(z)) = (|z|^2 + 1) / 2 for z in {p, q}
    rp = 0.5 * (abs(p) ** 2 + 1.0)
    rq = 0.5 * (abs(q) ** 2 + 1.0)
    cx = (rp * q.imag - rq * p.imag) / cross
    cy = (rq * p.real - rp * q.real) / cross
    c = complex(cx, cy)
    return c, float(np.sqrt(abs(c) ** 2 - 1.0))


def geodesic_point(p, q, t):
    """Point at fraction t of the hyperbolic arclength from p to q."""
    p, q = _z(p), _z(q)
    w = to_origin(p, q)
    r = np.abs(w)
    d = 2.0 * np.arctanh(r)
    with np.errstate(invalid="ignore", divide="ignore"):
        u = np.where(r > 0, w / np.where(r > 0, r, 1.0), 0.0)
    return from_origin(p, np.tanh(0.5 * t * d) * u)


def distance_to_geodesic(z, p, q):
    """Hyperbolic distance from z to the complete geodesic through p, q."""
    # move p to 0 and q onto the positive real axis: the geodesic is the diameter
    w = to_origin(p, q)
    rot = np.conj(w) / np.abs(w)
    x = to_origin(p, z) * rot
    # sinh(dist to real axis) = 2|Im x| / (1 - |x|^2)
    return np.arcsinh(2.0 * np.abs(np.imag(x)) / (1.0 - np.abs(x) ** 2))
