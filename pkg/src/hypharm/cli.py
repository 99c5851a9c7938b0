"""Command line pipeline: uniformize | cut | harmonic | tessellate | remesh | rate.

Exit codes: 0 success, 1 parse/input error, 2 convergence failure,
3 topology error, 4 divergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import cut as cutmod
from . import harmonic as H
from . import remesh as R
from . import uniformize as U
from .fuchsian import FundamentalPolygon, enumerate_group, regular_polygon
from .mesh import MeshError, ParseError, TopologyError, check_closed_surface, induced_metric, load_mesh
from .render import realization_svg, write_svg

log = logging.getLogger("hypharm")

EXIT_OK, EXIT_PARSE, EXIT_CONVERGENCE, EXIT_TOPOLOGY, EXIT_DIVERGENCE = 0, 1, 2, 3, 4


@dataclass
class PipelineConfig:
    input: Path
    target: str = "regular:2"
    tau: float | None = None
    eps_disp: float = 1e-9
    eps_grad: float = 1e-12
    max_iter: int = 200000
    weight_floor: float | None = None
    seed: int = 0
    out_dir: Path = Path("out")
    word_len: int = 1
    template: str | None = None
    tau_list: list[float] | None = None

    def __post_init__(self):
        if self.tau is not None and self.tau <= 0:
            raise ValueError("--tau must be positive")
        if self.eps_disp <= 0 or self.eps_grad <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iter < 0:
            raise ValueError("--max-iter must be non-negative")


def parse_target(text: str, genus: int | None = None) -> FundamentalPolygon:
    kind, _, arg = text.partition(":")
    if kind == "regular":
        poly = regular_polygon(int(arg) if arg else genus)
    elif kind == "file":
        poly = FundamentalPolygon.load(arg)
    else:
        raise ValueError(f"unknown target {text!r}; use regular:<g> or file:<path>")
    if genus is not None and poly.genus != genus:
        raise TopologyError(f"target has genus {poly.genus} but the mesh has genus {genus}")
    return poly


def _summary(**kw):
    print(" ".join(f"{k}={v}" for k, v in kw.items()))


# ---------------------------------------------------------------- stages


def flatten(mesh, floor=None):
    """Flat metric, canonical energy weights and Euclidean initialization weights."""
    flow = U.hyperbolic_yamabe_flow(mesh, induced_metric(mesh))
    c = U.canonical_weights(mesh, flow.lengths)
    c_pos, n_reset = U.apply_positivity_policy(c, floor)
    ew, _ = U.apply_positivity_policy(U.euclidean_cotangent_weights(mesh, flow.lengths), floor)
    return flow, c, c_pos, ew, n_reset


def cmd_uniformize(cfg: PipelineConfig) -> int:
    mesh = load_mesh(cfg.input)
    check_closed_surface(mesh)
    flow, c, c_pos, _, n_reset = flatten(mesh, cfg.weight_floor)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    U.dump_json(cfg.out_dir / "uniformize.json", u=flow.u, K=flow.curvature, c=c,
                lengths=[float(x) for x in flow.lengths], c_policy=[float(x) for x in c_pos])
    _summary(max_abs_K=f"{np.abs(flow.curvature).max():.3e}", iterations=flow.iterations,
             negative_weights=int(np.count_nonzero(c < 0)), reset=n_reset)
    return EXIT_OK


def cmd_cut(cfg: PipelineConfig) -> int:
    mesh = load_mesh(cfg.input)
    g = check_closed_surface(mesh)
    poly = parse_target(cfg.target, g)
    cs = cutmod.cut_surface(mesh, poly)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    cs.dump_json(cfg.out_dir / "cut.json")
    _summary(genus=g, base=cs.base_vertex, loops=len(cs.loops), segments=cs.n_segments,
             cut_vertices=cs.mesh.n_vertices)
    return EXIT_OK


def prepare(cfg: PipelineConfig):
    mesh = load_mesh(cfg.input)
    g = check_closed_surface(mesh)
    poly = parse_target(cfg.target, g)
    flow, c, c_pos, ew, n_reset = flatten(mesh, cfg.weight_floor)
    cs = cutmod.cut_surface(mesh, poly)
    r0 = H.initialize_euclidean(cs, poly, ew, flow.lengths, weights=c_pos)
    return mesh, r0, n_reset


def _write_map_svg(path, r: H.GeodesicRealization):
    rep = H.check_embedding(r)
    flipped = np.nonzero(_face_orientation(r) <= 0)[0]
    write_svg(path, realization_svg(r.positions, r.cut.mesh.edges, r.polygon,
                                    enumerate_group(r.polygon, 0), flipped, r.cut.mesh.faces))
    return rep


def _face_orientation(r):
    from .hypgeom import klein

    F = r.cut.mesh.faces
    k = klein(r.positions)[F]
    return ((k[:, 1] - k[:, 0]).conjugate() * (k[:, 2] - k[:, 0])).imag


def cmd_harmonic(cfg: PipelineConfig) -> int:
    mesh, r0, n_reset = prepare(cfg)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    init_rep = _write_map_svg(cfg.out_dir / "initial.svg", r0)
    base_tau = H.default_tau(r0) if cfg.tau is None else cfg.tau
    taus = cfg.tau_list or [base_tau]
    for k, tau in enumerate(taus):
        suffix = "" if cfg.tau_list is None else f"_{k}"
        r, trace = H.descend(r0, tau=tau, eps_disp=cfg.eps_disp, eps_grad=cfg.eps_grad, max_iter=cfg.max_iter)
        trace.write_csv(cfg.out_dir / f"trace{suffix}.csv")
        data = H.realization_to_json(r, trace)
        data["vertex_coords"] = mesh.coords.tolist()
        data["tau"] = tau
        data["seed"] = cfg.seed
        (cfg.out_dir / f"realization{suffix}.json").write_text(json.dumps(data))
        rep = _write_map_svg(cfg.out_dir / f"final{suffix}.svg", r)
        _summary(tau=f"{tau:.6g}", criterion=trace.criterion, iterations=trace.iteration[-1],
                 final_energy=f"{trace.energy[-1]:.12g}", initial_flips=init_rep.flipped_face_count,
                 flips=rep.flipped_face_count, max_angle_error=f"{rep.max_angle_error:.3e}",
                 reset_weights=n_reset)
    return EXIT_OK


def cmd_tessellate(cfg: PipelineConfig) -> int:
    r, _ = H.load_realization(cfg.input)
    elems = enumerate_group(r.polygon, cfg.word_len)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    write_svg(cfg.out_dir / "tessellation.svg",
              realization_svg(r.positions, r.cut.mesh.edges, r.polygon, elems))
    _summary(copies=len(elems), constraint_residual=f"{r.constraint_residual():.3e}")
    return EXIT_OK


def load_template(text: str, polygon: FundamentalPolygon) -> R.TemplateMesh:
    kind, _, arg = text.partition(":")
    if kind == "subdivide":
        return R.polygon_template(polygon, int(arg or 6))
    path = Path(text)
    if not path.exists() or not path.with_suffix(".json").exists():
        raise FileNotFoundError(f"template {text} (with .json sidecar) not found")
    return R.TemplateMesh.load(path)


def cmd_remesh(cfg: PipelineConfig) -> int:
    r, data = H.load_realization(cfg.input)
    if cfg.template is None:
        raise ValueError("--template is required")
    t = load_template(cfg.template, r.polygon)
    coords = np.asarray(data["vertex_coords"], float)
    out = R.remesh(r, t, coords, max(cfg.word_len, 4))
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    from .mesh import genus, save_off

    save_off(cfg.out_dir / "remeshed.off", out)
    hist = R.base_valence_histogram(t, out, r.polygon)
    _summary(vertices=out.n_vertices, faces=out.n_faces, genus=genus(out), closed=out.is_closed(),
             corner_valence=hist["corner"])
    return EXIT_OK


def cmd_rate(cfg: PipelineConfig) -> int:
    trace = H.OptimizerTrace.read_csv(cfg.input)
    ratios = H.convergence_rate(trace.energy, min(trace.energy))
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    with open(cfg.out_dir / "rate.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(["iter", "ratio"])
        for it, x in zip(trace.iteration[1:], ratios):
            w.writerow([it, repr(float(x))])
    _summary(tail_mean=f"{H.tail_mean(ratios):.6f}", iterations=len(ratios))
    return EXIT_OK


COMMANDS = {
    "uniformize": cmd_uniformize,
    "cut": cmd_cut,
    "harmonic": cmd_harmonic,
    "tessellate": cmd_tessellate,
    "remesh": cmd_remesh,
    "rate": cmd_rate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hypharm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--input", type=Path, required=True,
                       help="mesh (OFF/OBJ), realization JSON or trace CSV depending on the command")
        p.add_argument("--target", default="regular:2", help="regular:<g> or file:<polygon.json>")
        p.add_argument("--tau", type=float, default=None, help="step size (default: scaled by weighted degree)")
        p.add_argument("--eps-disp", type=float, default=1e-9)
        p.add_argument("--eps-grad", type=float, default=1e-12)
        p.add_argument("--max-iter", type=int, default=200000)
        p.add_argument("--weight-floor", type=float, default=None)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out-dir", type=Path, default=Path("out"))
        p.add_argument("--word-len", type=int, default=1)
        p.add_argument("--template", default=None, help="template OFF (JSON sidecar alongside) or subdivide:<n>")
        p.add_argument("--tau-list", default=None, help="comma-separated step sizes, one run each")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        tau_list = None if args.tau_list is None else [float(x) for x in args.tau_list.split(",")]
        cfg = PipelineConfig(args.input, args.target, args.tau, args.eps_disp, args.eps_grad, args.max_iter,
                             args.weight_floor, args.seed, args.out_dir, args.word_len, args.template, tau_list)
        if not cfg.input.exists():
            raise FileNotFoundError(f"{cfg.input} does not exist")
        np.random.seed(cfg.seed)
        return COMMANDS[args.command](cfg)
    except H.DivergenceError as exc:
        log.error("diverged: %s", exc)
        return EXIT_DIVERGENCE
    except U.ConvergenceError as exc:
        log.error("no convergence: %s", exc)
        return EXIT_CONVERGENCE
    except (TopologyError, cutmod.CutError) as exc:
        log.error("topology: %s", exc)
        return EXIT_TOPOLOGY
    except (ParseError, MeshError, FileNotFoundError, ValueError, KeyError, json.JSONDecodeError) as exc:
        log.error("input: %s", exc)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
