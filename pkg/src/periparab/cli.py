"""
Command line interface.

    periparab solve      --config run.json --out-dir out/
    periparab choose-k   --config run.json --out-dir out/
    periparab identify   --config run.json --out-dir out/
    periparab example34  --config run.json --out-dir out/

Exit codes: 0 success, 2 configuration / validation error, 3 solver failure,
4 identification failure, 5 scenario contradiction.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import energy_report
from .config import RunConfig, load_config, worker_count
from .errors import IdentificationError, PeriparabError, SolverError, ValidationError
from .galerkin import assemble
from .identify import IdentificationProblem, IdentifyConfig, ObservationWindow, identify, twin_target
from .io import _fmt_float, read_matrix_csv, write_field_csv, write_json, write_matrix_csv, write_trajectory_csv
from .periodic import SplitIndex, choose_k, monodromy, solve_direct, solve_fixed_point, tail_monodromy_norm
from .scenarios import run_example34

logger = logging.getLogger("periparab")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_IDENTIFY = 4
EXIT_SCENARIO = 5


class ScenarioContradiction(PeriparabError):
    pass


def _system(cfg: RunConfig):
    grid, tg = cfg.grid(), cfg.time_grid()
    basis = cfg.basis(grid)
    e = cfg.build_perturbation(cfg.perturbation, grid, tg)
    f = cfg.build_forcing(cfg.forcing, grid, tg)
    return assemble(basis, e, f, tg), f


def _split(cfg: RunConfig, sys):
    if cfg.split_k is None:
        return choose_k(sys, cfg.mu_target, cfg.k_max, seed=cfg.seed)
    return SplitIndex(cfg.split_k, sys.n_modes)


def solve_outputs(cfg: RunConfig) -> dict:
    """Run the periodic solve; returns in-memory artifacts keyed by file name."""
    sys, f = _system(cfg)
    split = _split(cfg, sys)
    s = cfg.solve
    head = np.asarray(s.get("head") or np.zeros(split.k), dtype=float)
    if head.size != split.k:
        raise ValidationError(f"solve.head has {head.size} entries but the split has k = {split.k}")
    est = tail_monodromy_norm(sys, split, seed=cfg.seed)
    if s.get("method", "fixed_point") == "direct":
        sol = solve_direct(sys, head, split)
    else:
        sol = solve_fixed_point(
            sys, head, split, tol=float(s.get("tol", 1e-9)), max_iter=int(s.get("max_iter", 500)), mu=est.mu
        )
    report = energy_report(sol, sys, head, f)
    summary = {
        "schema_version": 1,
        "command": "solve",
        "k": split.k,
        "n_modes": split.n,
        "mu": est.mu,
        "mu_converged": est.converged,
        "method": sol.method,
        "iterations": sol.iterations,
        "residual": sol.residual,
        "head": sol.head.tolist(),
        "energy": report.as_dict(),
    }
    return {"summary": summary, "solution": sol, "system": sys}


def cmd_solve(cfg: RunConfig, out: Path) -> int:
    res = solve_outputs(cfg)
    sol, sys = res["solution"], res["system"]
    out.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(out / "trajectory.csv", sol.trajectory)
    write_json(out / "summary.json", res["summary"])
    write_field_csv(out / "field.csv", sys.basis.grid.nodes, sol.trajectory.times, sol.trajectory.field())
    return EXIT_OK


def cmd_choose_k(cfg: RunConfig, out: Path) -> int:
    sys, _ = _system(cfg)
    split = choose_k(sys, cfg.mu_target, cfg.k_max, seed=cfg.seed)
    phi = monodromy(sys)
    scan = [tail_monodromy_norm(sys, SplitIndex(k, sys.n_modes), seed=cfg.seed, phi=phi).mu for k in range(split.k + 1)]
    out.mkdir(parents=True, exist_ok=True)
    write_json(
        out / "choose_k.json",
        {"schema_version": 1, "command": "choose-k", "k": split.k, "mu_target": cfg.mu_target, "mu_by_k": scan},
    )
    return EXIT_OK


def _identification_problem(cfg: RunConfig):
    idf = cfg.identify
    if not idf:
        raise ValidationError("config has no 'identify' section")
    grid, tg = cfg.grid(), cfg.time_grid()
    basis = cfg.basis(grid)
    f = cfg.build_forcing(cfg.forcing, grid, tg)
    win = idf.get("window", {})
    if win.get("x_min") is None:
        window = ObservationWindow.full(grid)
    else:
        window = ObservationWindow.from_interval(grid, win["x_min"], win["x_max"])
    q = float(idf.get("q", 2.0))
    bound = float(idf.get("bound_M", 1.0))
    if cfg.split_k is None:
        e0 = cfg.build_perturbation({"kind": "zero"}, grid, tg)
        split = choose_k(assemble(basis, e0, f, tg), cfg.mu_target, cfg.k_max, seed=cfg.seed)
    else:
        split = SplitIndex(cfg.split_k, cfg.modes)
    prob = IdentificationProblem(
        basis, tg, f, split, window, None, q=q, bound_M=bound,
        n_ex=int(idf.get("n_ex", 5)), n_et=int(idf.get("n_et", 5)), mu_target=cfg.mu_target,
    )
    if "target" in idf:
        _, data = read_matrix_csv(cfg.resolve(idf["target"]["path"]), header=False)
        expected = (window.indices.size, tg.n_nodes)
        if data.shape != expected:
            raise ValidationError(f"target data must be {expected[0]} x {expected[1]}, got {data.shape}")
        return replace(prob, target=data), None
    twin = idf["twin"]
    e_spec = {"q": q, "bound_M": bound, **twin.get("e", {"kind": "zero"})}
    e_true = cfg.build_perturbation(e_spec, grid, tg)
    a_true = np.asarray(twin.get("head") or np.zeros(split.k), dtype=float)
    if a_true.size != split.k:
        raise ValidationError(f"identify.twin.head needs {split.k} entries")
    prob = twin_target(prob, e_true, a_true, float(twin.get("noise", 0.0)), int(twin.get("seed", cfg.seed)))
    return prob, (e_true, a_true)


def cmd_identify(cfg: RunConfig, out: Path) -> int:
    prob, truth = _identification_problem(cfg)
    idf = cfg.identify
    init = idf.get("initial_e", 0.0)
    fixed = idf.get("fixed_head")
    conf = IdentifyConfig(
        step=float(idf.get("step", 1.0)),
        max_iter=int(idf.get("max_iter", 50)),
        fd_step=float(idf.get("fd_step", 1e-4)),
        tol=float(idf.get("tol", 1e-14)),
        initial_e=np.asarray(init, dtype=float).reshape(prob.n_ex, prob.n_et) if isinstance(init, list) else float(init),
        fixed_head=None if fixed is None else np.asarray(fixed, dtype=float),
        tikhonov=float(idf.get("tikhonov", 0.0)),
        workers=worker_count(),
        seed=cfg.seed,
    )
    result = identify(prob, conf)
    summary = {
        "schema_version": 1,
        "command": "identify",
        "k": prob.split.k,
        "objective": result.objective,
        "a_star": result.a_star.tolist(),
        "gram_min_eig": result.gram_min_eig,
        "iterations": result.iterations,
        "objective_history": list(result.objective_history),
        "params": result.params.tolist(),
    }
    if truth is not None:
        summary["twin_head"] = truth[1].tolist()
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "result.json", summary)
    x_knots = np.linspace(0.0, prob.grid.length, prob.n_ex) if prob.n_ex > 1 else np.array([0.0])
    t_knots = np.linspace(0.0, prob.time_grid.horizon, prob.n_et) if prob.n_et > 1 else np.array([0.0])
    header = ["x"] + [_fmt_float(float(t)) for t in t_knots]
    write_matrix_csv(out / "e_recovered.csv", header, np.column_stack([x_knots, result.params]))
    return EXIT_OK


def cmd_example34(cfg: RunConfig, out: Path) -> int:
    ex = cfg.example34
    if not ex:
        raise ValidationError("config has no 'example34' section")
    K = int(ex["K"])
    if K >= cfg.modes:
        raise ValidationError("example34.K must be smaller than the number of modes")
    grid, tg = cfg.grid(), cfg.time_grid()
    forcing = cfg.build_forcing(ex["forcing"], grid, tg) if "forcing" in ex else None
    report = run_example34(K, grid, tg, cfg.modes, forcing, ex.get("head"))
    report = {"schema_version": 1, "command": "example34", **report}
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "example34.json", report)
    if report["split_K_minus_1"]["status"] == "solvable":
        raise ScenarioContradiction(
            f"split {K - 1} is well-conditioned (condition {report['split_K_minus_1']['condition']:.3g}); "
            "mode K should be neutral"
        )
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "choose-k": cmd_choose_k,
    "identify": cmd_identify,
    "example34": cmd_example34,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="periparab", description=__doc__.split("\n\n")[0].strip())
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--out-dir", required=True, type=Path)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](cfg, args.out_dir)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ScenarioContradiction as exc:
        print(f"scenario contradiction: {exc}", file=sys.stderr)
        return EXIT_SCENARIO
    except IdentificationError as exc:
        print(f"identification failed: {exc}", file=sys.stderr)
        return EXIT_IDENTIFY
    except SolverError as exc:
        print(f"solver failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
