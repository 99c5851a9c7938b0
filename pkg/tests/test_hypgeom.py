import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hypharm.hypgeom import (
    DegenerateEdgeError,
    DiskPoint,
    DomainError,
    InvalidTriangleError,
    MobiusTransform,
    angle_from_cosine_law,
    angles_from_lengths,
    delta,
    exp_map,
    from_klein,
    geodesic_point,
    geodesic_through,
    geodesic_unit_tangent,
    hyp_distance,
    hyp_law_of_cosines,
    hyp_norm,
    klein,
    log_map,
    mobius_apply,
    mobius_compose,
    mobius_inverse,
    triangle_area,
)


def disk_points(rng, n, rmax=0.95):
    r = rmax * np.sqrt(rng.random(n))
    return r * np.exp(2j * np.pi * rng.random(n))


def random_mobius(rng):
    p = disk_points(rng, 1, 0.9)[0]
    return MobiusTransform.rotation(rng.uniform(0, 2 * np.pi)) @ MobiusTransform.translation(p)


coord = st.floats(-0.7, 0.7, allow_nan=False)
points = st.builds(complex, coord, coord)


def test_distance_examples():
    assert hyp_distance(0j, 0j) == 0.0
    # along a diameter the metric integrates to ln((1+r)/(1-r))
    assert hyp_distance(0j, 0.5 + 0j) == pytest.approx(np.log(3.0), abs=1e-15)
    p, q = 0.3 + 0.1j, -0.2 + 0.4j
    assert hyp_distance(p, q) == hyp_distance(q, p)


def test_delta_examples(rng):
    assert delta(0j, 0j) == 0.0
    assert delta(0j, 0.5) == pytest.approx(2.0 / 3.0, rel=1e-15)
    p, q = disk_points(rng, 50), disk_points(rng, 50)
    assert np.allclose(np.cosh(hyp_distance(p, q)) - 1.0, delta(p, q), rtol=1e-10)


def test_domain_error():
    with pytest.raises(DomainError):
        hyp_distance(0j, 1.0 + 0j)
    with pytest.raises(ValueError):
        DiskPoint(0.8, 0.8)


def test_tiny_distance_accuracy():
    # series: d = 2 arctanh(r) ~ 2r for tiny r
    assert hyp_distance(0j, 1e-12) == pytest.approx(2e-12, rel=1e-12)


def test_mobius_examples(rng):
    ident = MobiusTransform.identity()
    assert mobius_apply(ident, 0.3 + 0.4j) == 0.3 + 0.4j
    rot = MobiusTransform(np.exp(1j * np.pi / 4), 0j)
    assert abs(rot(0.6 + 0j) - 0.6j) < 1e-15
    m = random_mobius(rng)
    assert abs(abs(m.a) ** 2 - abs(m.b) ** 2 - 1) < 1e-13
    p, q = disk_points(rng, 100, 0.9), disk_points(rng, 100, 0.9)
    assert np.max(np.abs(hyp_distance(m(p), m(q)) - hyp_distance(p, q))) < 1e-12


def test_group_structure(rng):
    m1, m2, m3 = (random_mobius(rng) for _ in range(3))
    z = disk_points(rng, 20)
    assert np.allclose(mobius_compose(m1, m2)(z), m1(m2(z)), atol=1e-13)
    assert mobius_compose(MobiusTransform.identity(), m1).distance_to(m1) < 1e-15
    assert mobius_compose(m1, mobius_inverse(m1)).distance_to(MobiusTransform.identity()) < 1e-14
    assert ((m1 @ m2) @ m3).distance_to(m1 @ (m2 @ m3)) < 1e-12


def test_canonical_sign():
    m = MobiusTransform(-1.5 + 0j, np.sqrt(1.25) + 0j)
    c = m.canonical()
    assert c.a.real > 0 and c.distance_to(m) == 0.0


def test_unit_tangent_examples():
    u = geodesic_unit_tangent(0j, 0.5 + 0j)
    assert abs(u.v - 0.5) < 1e-15 and u.norm() == pytest.approx(1.0)
    u = geodesic_unit_tangent(0j, 0.3j)
    assert abs(u.v.real) < 1e-15 and u.v.imag > 0
    with pytest.raises(DegenerateEdgeError):
        geodesic_unit_tangent(0.1 + 0j, 0.1 + 0j)


def test_unit_tangent_reaches_target(rng):
    p, q = disk_points(rng, 30, 0.9), disk_points(rng, 30, 0.9)
    for a, b in zip(p, q):
        u = geodesic_unit_tangent(a, b)
        assert u.norm() == pytest.approx(1.0, abs=1e-12)
        assert abs(exp_map(a, hyp_distance(a, b) * u.v) - b) < 1e-10


def test_exp_examples():
    assert exp_map(0.2 + 0.1j, 0j) == 0.2 + 0.1j
    for t in (0.1, 1.0, 5.0):
        # hyperbolic norm t at the origin is Euclidean length t/2
        assert abs(exp_map(0j, t / 2) - np.tanh(t / 2)) < 1e-15


def test_exp_distance_matches_norm(rng):
    p = disk_points(rng, 200, 0.9)
    v = 0.05 * (rng.normal(size=200) + 1j * rng.normal(size=200))
    q = exp_map(p, v)
    assert np.all(np.abs(q) < 1)
    ok = hyp_norm(p, v) < 20
    assert np.allclose(hyp_distance(p, q)[ok], hyp_norm(p, v)[ok], atol=1e-9)


@settings(max_examples=200, deadline=None)
@given(points, points)
def test_exp_log_round_trip_property(p, q):
    assert abs(exp_map(p, log_map(p, q)) - q) < 1e-10


@settings(max_examples=200, deadline=None)
@given(points, points, points)
def test_triangle_inequality_property(p, q, r):
    assert hyp_distance(p, r) <= hyp_distance(p, q) + hyp_distance(q, r) + 1e-12


def test_law_of_cosines_examples():
    b, c = 0.7, 1.3
    a = hyp_law_of_cosines(b, c, np.pi / 2)
    assert np.cosh(a) == pytest.approx(np.cosh(b) * np.cosh(c), rel=1e-13)
    for ell in (0.1, 1.0, 3.0):
        A, B, C = angles_from_lengths(ell, ell, ell)
        assert np.cos(A) == pytest.approx(np.cosh(ell) / (np.cosh(ell) + 1), abs=1e-13)
        assert A == pytest.approx(B) and B == pytest.approx(C)
    A, B, C = angles_from_lengths(1e-3, 1e-3, 1e-3)
    assert max(abs(x - np.pi / 3) for x in (A, B, C)) < 1e-6


def test_angles_invert_law_of_cosines(rng):
    for _ in range(50):
        b, c = rng.uniform(0.05, 3, 2)
        A = rng.uniform(0.1, 3.0)
        a = hyp_law_of_cosines(b, c, A)
        A2, _, _ = angles_from_lengths(a, b, c)
        assert A2 == pytest.approx(A, abs=1e-9)
        assert angle_from_cosine_law(a, b, c) == pytest.approx(A, abs=1e-7)


def test_invalid_triangle():
    with pytest.raises(InvalidTriangleError):
        angles_from_lengths(1.0, 1.0, 2.5)
    with pytest.raises(InvalidTriangleError):
        angles_from_lengths(0.0, 1.0, 1.0)


def test_area_is_angle_deficit(rng):
    # triangle with a vertex at the origin: compare with the explicit disk triangle
    p, q = 0.4 + 0.1j, -0.2 + 0.5j
    a, b, c = hyp_distance(p, q), hyp_distance(0j, q), hyp_distance(0j, p)
    A, B, C = angles_from_lengths(a, b, c)
    # the angle at the origin is the Euclidean angle between p and q
    assert A == pytest.approx(abs(np.angle(q / p)), abs=1e-12)
    assert triangle_area(a, b, c) > 0
    assert A + B + C < np.pi


def test_near_boundary_finite():
    p = (1 - 1e-9) * np.exp(0.3j)
    assert np.isfinite(hyp_distance(0j, p))
    assert np.isfinite(log_map(0j, p))


def test_klein_round_trip(rng):
    z = disk_points(rng, 100, 0.99)
    assert np.allclose(from_klein(klein(z)), z, atol=1e-14)


def test_geodesic_circle_orthogonal(rng):
    for _ in range(20):
        p, q = disk_points(rng, 2, 0.9)
        c, r = geodesic_through(p, q)
        assert abs(abs(p - c) - r) < 1e-10 and abs(abs(q - c) - r) < 1e-10
        # orthogonality to the unit circle: |c|^2 = 1 + r^2
        assert abs(abs(c) ** 2 - 1 - r * r) < 1e-9
        mid = geodesic_point(p, q, 0.5)
        assert abs(abs(mid - c) - r) < 1e-9
        assert hyp_distance(p, mid) == pytest.approx(0.5 * hyp_distance(p, q), rel=1e-10)
    assert geodesic_through(0.2 + 0j, -0.5 + 0j) is None
