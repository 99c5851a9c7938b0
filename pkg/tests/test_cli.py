import csv
import functools
import json
import re

import numpy as np
import pytest

from hypharm import cli
from hypharm import uniformize as U
from hypharm.mesh import load_mesh, octahedron, save_off
from hypharm.render import SIZE

from conftest import DATA

G2 = str(DATA / "genus2.off")
FAST = ["--tau", "0.12"]


def run(capsys, *argv):
    rc = cli.main([str(a) for a in argv])
    out = capsys.readouterr().out.strip().splitlines()
    summary = dict(kv.split("=", 1) for kv in out[-1].split()) if out else {}
    return rc, summary


@pytest.fixture(scope="module")
def harmonic_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("harm")
    assert cli.main(["harmonic", "--input", G2, "--out-dir", str(d)] + FAST) == 0
    return d


def read_trace(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def test_uniformize(tmp_path, capsys):
    rc, s = run(capsys, "uniformize", "--input", G2, "--out-dir", tmp_path)
    assert rc == 0
    assert float(s["max_abs_K"]) < 1e-8
    data = json.loads((tmp_path / "uniformize.json").read_text())
    assert np.abs(data["K"]).max() < 1e-8
    # a flat metric is a fixed point of the flow
    m = load_mesh(G2)
    again = U.hyperbolic_yamabe_flow(m, np.asarray(data["lengths"]))
    assert again.iterations == 0


def test_cut(tmp_path, capsys):
    rc, s = run(capsys, "cut", "--input", G2, "--out-dir", tmp_path)
    assert rc == 0 and s["genus"] == "2" and s["segments"] == "8"
    assert len(json.loads((tmp_path / "cut.json").read_text())["loops"]) == 4


def test_harmonic_outputs(harmonic_dir):
    for name in ("initial.svg", "final.svg", "trace.csv", "realization.json"):
        assert (harmonic_dir / name).stat().st_size > 0
    raw = (harmonic_dir / "trace.csv").read_bytes()
    assert raw.startswith(b"iter,energy,grad_msq,max_disp,wall_ms\r\n")
    data = json.loads((harmonic_dir / "realization.json").read_text())
    assert data["criterion"] in ("disp", "grad")
    _, rows = read_trace(harmonic_dir / "trace.csv")
    assert int(rows[-1][0]) == data["iterations"]
    assert float(rows[-1][1]) == pytest.approx(data["final_energy"], rel=1e-12)


def test_harmonic_deterministic(harmonic_dir, tmp_path):
    assert cli.main(["harmonic", "--input", G2, "--out-dir", str(tmp_path)] + FAST) == 0
    h1, r1 = read_trace(harmonic_dir / "trace.csv")
    h2, r2 = read_trace(tmp_path / "trace.csv")
    assert h1 == h2 and h1[-1] == "wall_ms"
    # wall-clock timing is the only column allowed to differ
    assert [r[:-1] for r in r1] == [r[:-1] for r in r2]
    assert (harmonic_dir / "realization.json").read_bytes() == (tmp_path / "realization.json").read_bytes()
    assert (harmonic_dir / "final.svg").read_bytes() == (tmp_path / "final.svg").read_bytes()


def test_svg_arcs_are_orthogonal_to_boundary(harmonic_dir):
    text = (harmonic_dir / "final.svg").read_text()
    s = 0.5 * SIZE / 1.05
    c0 = 0.5 * SIZE
    arcs = re.findall(r"M([-\d.]+),([-\d.]+)A([-\d.]+),[-\d.]+ 0 0 ([01]) ([-\d.]+),([-\d.]+)", text)
    assert len(arcs) > 100
    worst = 0.0
    for x0, y0, r, sweep, x1, y1 in arcs[:2000]:
        p = (np.array([float(x0), float(y0)]) - c0) / s
        q = (np.array([float(x1), float(y1)]) - c0) / s
        r = float(r) / s
        # circle of radius r through p and q; the centre is off the unit disk
        m, d = 0.5 * (p + q), q - p
        L = np.linalg.norm(d)
        if L < 1e-2 or r > 50:
            continue
        h = np.sqrt(max(r * r - 0.25 * L * L, 0.0))
        n = np.array([-d[1], d[0]]) / L
        centre = max((m + h * n, m - h * n), key=np.linalg.norm)
        worst = max(worst, abs(centre @ centre - 1 - r * r) / (r * r))
    # 3-decimal coordinates limit the check
    assert worst < 0.05


def test_tessellate(harmonic_dir, tmp_path, capsys):
    real = harmonic_dir / "realization.json"
    rc, s = run(capsys, "tessellate", "--input", real, "--out-dir", tmp_path, "--word-len", 0)
    assert rc == 0 and s["copies"] == "1"
    rc, s = run(capsys, "tessellate", "--input", real, "--out-dir", tmp_path)
    assert rc == 0 and s["copies"] == "9"
    assert float(s["constraint_residual"]) < 1e-12
    assert (tmp_path / "tessellation.svg").read_text().count("<path") == 9 + 1


def test_remesh(harmonic_dir, tmp_path, capsys):
    real = harmonic_dir / "realization.json"
    rc, s = run(capsys, "remesh", "--input", real, "--out-dir", tmp_path, "--template", "subdivide:6")
    assert rc == 0 and s["genus"] == "2" and s["closed"] == "True"
    out = load_mesh(tmp_path / "remeshed.off")
    out.validate()
    assert out.n_faces == int(s["faces"])


def test_remesh_missing_template(harmonic_dir, tmp_path, capsys):
    real = harmonic_dir / "realization.json"
    assert cli.main(["remesh", "--input", str(real), "--out-dir", str(tmp_path),
                     "--template", str(tmp_path / "none.off")]) == 1


def test_rate(harmonic_dir, tmp_path, capsys):
    rc, s = run(capsys, "rate", "--input", harmonic_dir / "trace.csv", "--out-dir", tmp_path)
    assert rc == 0
    raw = (tmp_path / "rate.csv").read_bytes()
    assert raw.startswith(b"iter,ratio\r\n")
    assert 0 < float(s["tail_mean"]) < 1


def test_tau_list(tmp_path, capsys):
    rc = cli.main(["harmonic", "--input", G2, "--out-dir", str(tmp_path), "--tau-list", "0.12,0.06",
                   "--max-iter", "50"])
    assert rc == 0
    for k in (0, 1):
        assert (tmp_path / f"trace_{k}.csv").exists() and (tmp_path / f"final_{k}.svg").exists()
    assert json.loads((tmp_path / "realization_1.json").read_text())["tau"] == 0.06


def test_exit_parse_errors(tmp_path):
    bad = tmp_path / "bad.off"
    bad.write_text("OFF\n3 1 0\n0 0 0\n1 0\n")
    assert cli.main(["uniformize", "--input", str(bad), "--out-dir", str(tmp_path)]) == 1
    assert cli.main(["uniformize", "--input", str(tmp_path / "nope.off")]) == 1
    assert cli.main(["harmonic", "--input", G2, "--tau", "-1", "--out-dir", str(tmp_path)]) == 1
    assert cli.main(["cut", "--input", G2, "--target", "weird:3", "--out-dir", str(tmp_path)]) == 1


def test_exit_topology(tmp_path):
    sphere = tmp_path / "oct.off"
    save_off(sphere, octahedron())
    assert cli.main(["uniformize", "--input", str(sphere), "--out-dir", str(tmp_path)]) == 3
    assert cli.main(["cut", "--input", G2, "--target", "regular:3", "--out-dir", str(tmp_path)]) == 3


def test_exit_convergence(tmp_path, monkeypatch):
    # one Newton step cannot flatten the metric
    monkeypatch.setattr(U, "hyperbolic_yamabe_flow", functools.partial(U.hyperbolic_yamabe_flow, max_iter=1))
    assert cli.main(["uniformize", "--input", G2, "--out-dir", str(tmp_path)]) == 2


def test_exit_divergence(tmp_path):
    assert cli.main(["harmonic", "--input", G2, "--tau", "5.0", "--out-dir", str(tmp_path)]) == 4


def test_exact_flags():
    p = cli.build_parser()
    sub = p._subparsers._group_actions[0].choices["harmonic"]
    flags = {s for a in sub._actions for s in a.option_strings}
    for f in ("--input", "--target", "--tau", "--eps-disp", "--eps-grad", "--max-iter", "--weight-floor",
              "--seed", "--out-dir", "--word-len", "--template"):
        assert f in flags
