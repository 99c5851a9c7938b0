"""Fundamental polygons with side pairings, and the Fuchsian groups they generate."""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .hypgeom import (
    MobiusTransform,
    angles_from_lengths,
    from_origin,
    hyp_distance,
    klein,
    mobius_compose,
    to_origin,
)

COEFF_TOL = 1e-9


class PolygonError(ValueError):
    pass


@dataclass(frozen=True)
class GroupElement:
    transform: MobiusTransform
    word: tuple[int, ...] = ()

    def __call__(self, z):
        return self.transform(z)

    def __matmul__(self, other: "GroupElement") -> "GroupElement":
        return GroupElement(mobius_compose(self.transform, other.transform), self.word + other.word)

    def inverse(self) -> "GroupElement":
        return GroupElement(self.transform.inverse(), tuple(-w for w in reversed(self.word)))


IDENTITY = GroupElement(MobiusTransform.identity(), ())


@dataclass
class FundamentalPolygon:
    """Convex geodesic 4g-gon with sides r_k = [v_k, v_{k+1}] (0-based here).

    ``pairing`` lists side pairs (i, j) with i < j; generator ``m`` maps side
    i onto side j reversed: v_i -> v_{j+1}, v_{i+1} -> v_j.
    """

    genus: int
    vertices: np.ndarray
    pairing: list[tuple[int, int]]
    generators: list[MobiusTransform] = field(default_factory=list)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=complex)
        n = len(self.vertices)
        if n != 4 * self.genus:
            raise PolygonError(f"expected {4 * self.genus} vertices, got {n}")
        seen = sorted(k for p in self.pairing for k in p)
        if seen != list(range(n)):
            raise PolygonError("pairing must be an involution covering every side")
        self.pairing = [tuple(sorted(map(int, p))) for p in self.pairing]
        if not self.generators:
            self.generators = [side_pairing(self.side(i), self.side(j)[::-1]) for i, j in self.pairing]
        self._partner = {}
        for g, (i, j) in enumerate(self.pairing):
            self._partner[i] = (j, g, +1)
            self._partner[j] = (i, g, -1)

    @property
    def n_sides(self) -> int:
        return len(self.vertices)

    def side(self, k: int) -> tuple[complex, complex]:
        n = self.n_sides
        return complex(self.vertices[k % n]), complex(self.vertices[(k + 1) % n])

    def partner(self, k: int) -> int:
        return self._partner[k][0]

    def side_transform(self, k: int) -> GroupElement:
        """Element mapping side k onto its partner (reversed)."""
        _, g, sign = self._partner[k]
        m = self.generators[g] if sign > 0 else self.generators[g].inverse()
        return GroupElement(m, (sign * (g + 1),))

    def neighbor_transform(self, k: int) -> GroupElement:
        """Element whose image of the polygon lies across side k."""
        return self.side_transform(self.partner(k))

    def interior_angles(self) -> np.ndarray:
        v = self.vertices
        n = self.n_sides
        out = np.empty(n)
        for k in range(n):
            p, a, b = v[k], v[k - 1], v[(k + 1) % n]
            wa, wb = to_origin(p, a), to_origin(p, b)
            ang = np.angle(wa / wb)
            out[k] = ang % (2 * np.pi)
        return out

    def angle_sum(self) -> float:
        return float(self.interior_angles().sum())

    def generator_elements(self) -> list[GroupElement]:
        out = []
        for g, m in enumerate(self.generators):
            out.append(GroupElement(m, (g + 1,)))
            out.append(GroupElement(m.inverse(), (-(g + 1),)))
        return out

    def contains(self, z, tol: float = 1e-12) -> np.ndarray:
        """Closed-polygon membership via half-planes in the Klein model."""
        k = klein(np.asarray(z, dtype=complex))
        kv = klein(self.vertices)
        inside = np.ones(np.shape(k), dtype=bool)
        for i in range(self.n_sides):
            a, b = kv[i], kv[(i + 1) % self.n_sides]
            cross = ((b - a).conjugate() * (k - a)).imag
            inside &= cross >= -tol
        return inside

    def side_violation(self, z) -> np.ndarray:
        """Per side, how far (Klein cross product) z lies outside it; >0 = outside."""
        k = klein(complex(z))
        kv = klein(self.vertices)
        n = self.n_sides
        out = np.empty(n)
        for i in range(n):
            a, b = kv[i], kv[(i + 1) % n]
            out[i] = -((b - a).conjugate() * (k - a)).imag / abs(b - a)
        return out

    def to_json(self) -> dict:
        return {
            "genus": self.genus,
            "vertices": [[float(z.real), float(z.imag)] for z in self.vertices],
            "pairing": [list(p) for p in self.pairing],
            "generators": [list(m.coefficients()) for m in self.generators],
        }

    @classmethod
    def from_json(cls, data: dict) -> "FundamentalPolygon":
        verts = [complex(x, y) for x, y in data["vertices"]]
        gens = [MobiusTransform(complex(a, b), complex(c, d)) for a, b, c, d in data.get("generators", [])]
        return cls(int(data["genus"]), np.array(verts), [tuple(p) for p in data["pairing"]], gens)

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_json(), indent=1))

    @classmethod
    def load(cls, path) -> "FundamentalPolygon":
        return cls.from_json(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------- construction


def regular_angle_sum(n_sides: int, s: float) -> float:
    """Interior angle sum of the regular n-gon with Euclidean vertex radius s."""
    R = 2 * np.arctanh(s)
    v0, v1 = s, s * np.exp(2j * np.pi / n_sides)
    side = float(hyp_distance(v0, v1))
    # triangle (center, v0, v1): base angles are half the interior angle
    base, _, _ = angles_from_lengths(R, side, R)
    return n_sides * 2 * base


def regular_radius(genus: int, tol: float = 1e-13) -> float:
    """Vertex radius s making the regular 4g-gon's angle sum 2 pi (bisection)."""
    n = 4 * genus
    lo, hi = 1e-6, 1 - 1e-12
    # angle sum decreases from (n-2) pi towards 0 as s grows
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if regular_angle_sum(n, mid) > 2 * np.pi:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def regular_radius_closed_form(genus: int) -> float:
    c = 1.0 / np.tan(np.pi / (4 * genus))
    return float(np.tanh(0.5 * np.arccosh(c * c)))


def block_pairing(genus: int) -> list[tuple[int, int]]:
    """Commutator pattern: sides 4m, 4m+1 paired with 4m+2, 4m+3."""
    out = []
    for m in range(genus):
        out += [(4 * m, 4 * m + 2), (4 * m + 1, 4 * m + 3)]
    return out


def regular_polygon(genus: int) -> FundamentalPolygon:
    if genus < 2:
        raise PolygonError("genus must be at least 2")
    s = regular_radius(genus)
    n = 4 * genus
    verts = s * np.exp(1j * np.pi * 2 * np.arange(n) / n)
    poly = FundamentalPolygon(genus, verts, block_pairing(genus))
    cycle = elliptic_cycle(poly)
    if len(cycle) != n:
        raise PolygonError("pairing does not produce a single vertex cycle")
    return poly


def side_pairing(src, dst) -> MobiusTransform:
    """Orientation-preserving isometry taking segment src=(p0,p1) to dst=(q0,q1)."""
    p0, p1 = complex(src[0]), complex(src[1])
    q0, q1 = complex(dst[0]), complex(dst[1])
    d_src, d_dst = float(hyp_distance(p0, p1)), float(hyp_distance(q0, q1))
    if abs(d_src - d_dst) > 1e-10:
        raise PolygonError(f"segment lengths differ: {d_src} vs {d_dst}")
    # T_p0 sends p0 to 0; rotate so the images of p1 and q1 line up; then back to q0
    wp = to_origin(p0, p1)
    wq = to_origin(q0, q1)
    if abs(wp) == 0:
        rot = 1.0 + 0j
    else:
        rot = (wq / abs(wq)) / (wp / abs(wp))
    to0 = MobiusTransform.normalized(1 + 0j, -p0)
    spin = MobiusTransform(complex(np.sqrt(rot)), 0j)
    back = MobiusTransform.normalized(1 + 0j, q0)
    return mobius_compose(back, mobius_compose(spin, to0))


# ---------------------------------------------------------------- cycles and enumeration


def elliptic_cycle(poly: FundamentalPolygon) -> list[tuple[int, GroupElement]]:
    """Vertex cycle starting at v_0: [(vertex index, element mapping v_0 to it)].

    Each step applies the side transform of the side *starting* at the current
    vertex, which lands on the end of the partner side; the walk continues
    along that partner's successor.
    """
    n = poly.n_sides
    k, elem = 0, IDENTITY
    out = [(0, IDENTITY)]
    for _ in range(n):
        t = poly.side_transform(k)
        # side k starts at v_k; its image ends at v_{partner}+1
        k = (poly.partner(k) + 1) % n
        elem = t @ elem
        if k == 0:
            break
        out.append((k, elem))
    else:
        raise PolygonError("vertex cycle does not close")
    if not np.isclose(abs(elem.transform.a), 1.0, atol=1e-9) or abs(elem.transform.b) > 1e-9:
        # the product fixes v_0 and must be trivial for a total angle of 2 pi
        raise PolygonError("elliptic cycle product is not the identity")
    return out


def cycle_angle_sum(poly: FundamentalPolygon) -> float:
    ang = poly.interior_angles()
    return float(sum(ang[k] for k, _ in elliptic_cycle(poly)))


def canonical_key(m: MobiusTransform, tol: float = COEFF_TOL):
    c = m.canonical()
    return tuple(np.round(np.array(c.coefficients()) / tol).astype(np.int64))


def enumerate_group(poly: FundamentalPolygon, max_word_len: int) -> list[GroupElement]:
    """Breadth-first enumeration of reduced words up to a length bound, deduplicated.

    Elements whose canonical coefficients agree within ``COEFF_TOL`` count
    once; coarse coefficient buckets keep the lookup near constant time.
    """
    gens = poly.generator_elements()
    out = [IDENTITY]
    buckets: dict = {}

    def seen_before(m: MobiusTransform) -> bool:
        c = m.canonical()
        key = canonical_key(c, 1e-6)
        for s in buckets.get(key, ()):
            if c.distance_to(s) < COEFF_TOL:
                return True
        buckets.setdefault(key, []).append(c)
        return False

    seen_before(IDENTITY.transform)
    frontier = [IDENTITY]
    for _ in range(max_word_len):
        nxt_frontier = []
        for elem in frontier:
            for g in gens:
                if elem.word and elem.word[-1] == -g.word[0]:
                    continue
                cand = elem @ g
                if seen_before(cand.transform):
                    continue
                out.append(cand)
                nxt_frontier.append(cand)
        frontier = nxt_frontier
    return out


class LocateError(RuntimeError):
    pass


def locate_in_fundamental_domain(p, poly: FundamentalPolygon, max_word_len: int = 32):
    """Find gamma with gamma(p) in the closed polygon by crossing violated sides.

    Returns (gamma, gamma(p)).
    """
    z = complex(p)
    elem = IDENTITY
    for _ in range(max_word_len + 1):
        viol = poly.side_violation(z)
        k = int(np.argmax(viol))
        if viol[k] <= 1e-12:
            return elem, z
        step = poly.neighbor_transform(k).inverse()
        z = complex(step(z))
        elem = step @ elem
    raise LocateError(f"point {p} not located within {max_word_len} steps")
