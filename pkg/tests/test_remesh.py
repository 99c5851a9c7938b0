import numpy as np
import pytest
from scipy.spatial import cKDTree

from hypharm import harmonic as H
from hypharm import remesh as R
from hypharm.mesh import euler_characteristic, genus


def canon_faces(F):
    return {tuple(np.roll(f, -int(np.argmin(f)))) for f in np.asarray(F)}


def signed_volume(mesh):
    X = mesh.coords[mesh.faces]
    return float(np.einsum("ij,ij->i", X[:, 0], np.cross(X[:, 1], X[:, 2])).sum() / 6)


@pytest.fixture(scope="module")
def octagon_template(g2):
    return R.polygon_template(g2.polygon, 8)


def test_round_trip(g2):
    r, _ = g2.fast
    T = R.template_from_realization(r)
    out = R.remesh(r, T, g2.mesh.coords)
    assert out.n_vertices == g2.mesh.n_vertices
    d, idx = cKDTree(g2.mesh.coords).query(out.coords)
    assert d.max() < 1e-9
    assert len(set(idx.tolist())) == g2.mesh.n_vertices
    assert canon_faces(idx[out.faces]) == canon_faces(g2.mesh.faces)


def test_octagon_template_remesh(g2, octagon_template):
    r, _ = g2.fast
    out = R.remesh(r, octagon_template, g2.mesh.coords)
    out.validate()
    assert out.is_closed()
    assert euler_characteristic(out) == -2 and genus(out) == 2
    # orientation follows the original surface; the coarse template cuts corners, so only the sign
    assert np.sign(signed_volume(out)) == np.sign(signed_volume(g2.mesh))
    hist = R.base_valence_histogram(octagon_template, out, g2.polygon)
    assert hist["corner"] == [16]


def test_template_structure(g2):
    P = g2.polygon
    for n in (3, 4, 8):
        T = R.polygon_template(P, n)
        R.check_pair_chains(T, P)
        for a, b in T.pairs:
            assert a != b
        # paired points are exact images under the side pairing
        for i, j in P.pairing:
            si = sorted((t, v) for v, s, t in T.boundary if s == i)
            sj = sorted((t, v) for v, s, t in T.boundary if s == j)
            m = P.side_transform(i)
            src = T.points[[v for _, v in si]]
            dst = T.points[[v for _, v in sj]][::-1]
            assert np.abs(m(src) - dst).max() < 1e-12
        assert np.all(P.contains(T.points, tol=1e-12))
        _, closed = R.template_cut_surface(T, P)
        assert genus(closed) == 2 and closed.is_closed()
    with pytest.raises(ValueError):
        R.polygon_template(P, 2)


def test_atlas_identity_when_image_contains_polygon(g2, octagon_template):
    P = g2.polygon
    cut, closed = R.template_cut_surface(octagon_template, P)
    ident = H.GeodesicRealization(octagon_template.points, cut, P, np.ones(closed.n_edges), H.build_scheme(cut, P))
    atlas = R.build_atlas(ident, R.coverage_samples(P, octagon_template))
    assert len(atlas) == 1 and atlas.copies[0].element.word == ()


def test_atlas_covers_template(g2, octagon_template):
    r, _ = g2.fast
    samples = R.coverage_samples(g2.polygon, octagon_template)
    atlas = R.build_atlas(r, samples)
    assert 1 < len(atlas) < 100
    copy, face, bary = atlas.locate(octagon_template.points)
    assert np.all(copy >= 0)
    assert np.all(bary >= -R.BARY_TOL)
    assert np.allclose(bary.sum(axis=1), 1.0)


def test_coverage_error(g2, octagon_template):
    r, _ = g2.fast
    with pytest.raises(R.CoverageError):
        R.build_atlas(r, R.coverage_samples(g2.polygon, octagon_template), max_word_len=0)


def test_template_io(tmp_path, octagon_template):
    octagon_template.save(tmp_path / "t.off")
    back = R.TemplateMesh.load(tmp_path / "t.off")
    assert np.array_equal(back.points, octagon_template.points)
    assert back.pairs == octagon_template.pairs
    assert back.boundary == octagon_template.boundary
    assert np.array_equal(back.mesh.faces, octagon_template.mesh.faces)


def test_glue_errors(g2, octagon_template):
    T = octagon_template
    X = np.zeros((T.mesh.n_vertices, 3))
    a, b = T.pairs[5]
    X[b] = [1.0, 0, 0]
    with pytest.raises(R.GlueError):
        R.glue_boundary(T, X)
    short = R.TemplateMesh(T.mesh, T.points, [x for x in T.boundary if not (x[1] == 0 and 0 < x[2] < 1)], T.pairs)
    with pytest.raises(R.GlueError):
        R.check_pair_chains(short, g2.polygon)


def test_pull_back_exact_on_vertices(g2):
    # template vertices at realization vertices land on the original vertex positions
    r, _ = g2.fast
    T = R.template_from_realization(r)
    atlas = R.build_atlas(r, R.coverage_samples(g2.polygon, T))
    X = R.pull_back(T, atlas, r, g2.mesh.coords)
    assert np.abs(X - g2.mesh.coords[r.cut.pi_V]).max() < 1e-9
