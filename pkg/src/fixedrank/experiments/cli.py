"""Command-line front end: one subcommand per scenario plus analyze/solve."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from ..errors import FixedRankError, InvalidInputError
from ..operators import build_theta, generate_instance, random_init, spectral_init
from ..solvers import SolverConfig, run
from .. import analysis
from .runio import ScenarioConfig, load_config
from .scenarios import SCENARIO_FUNCTIONS, write_scenario_outputs

_SUBCOMMANDS = (
    "quadratic",
    "compare",
    "oscillation",
    "radius",
    "landscape",
    "init-study",
    "runtime",
    "phase",
    "analyze",
    "solve",
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fixedrank",
        description="Low-rank estimation solvers and convergence-rate experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=str, default=None, help="JSON config path")
        p.add_argument("--out", type=str, default=None, help="output directory")
        p.add_argument("--seeds", type=str, default=None, help="comma-separated seed list")
        p.add_argument("--threads", type=int, default=None)
    return parser


def _parse_seeds(text: str) -> list[int]:
    try:
        return [int(chunk) for chunk in text.split(",") if chunk.strip() != ""]
    except ValueError as exc:
        raise InvalidInputError(f"unparseable seeds list {text!r}") from exc


def _config_for(args, scenario: str) -> ScenarioConfig:
    if args.config is not None:
        cfg = load_config(args.config, scenario)
    else:
        cfg = ScenarioConfig(scenario=scenario)
        cfg.validate()
    if args.out is not None:
        cfg.out_dir = args.out
    if args.seeds is not None:
        cfg.seeds = _parse_seeds(args.seeds)
    if args.threads is not None:
        cfg.threads = args.threads
    cfg.validate()
    return cfg


def _run_analyze(cfg: ScenarioConfig) -> int:
    inst = generate_instance(cfg.kind, cfg.n1, cfg.n2, cfg.r, cfg.sampling, cfg.seeds[0])
    report = analysis.projected_theta_spectrum(
        build_theta(inst.operator), inst.ground_truth
    )
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "spectral_report.json"
    path.write_text(report.to_json() + "\n")
    print(
        f"lam_max={report.lam_max:.6f} lam_min={report.lam_min:.6f} "
        f"kappa={report.kappa:.3f} step_opt={report.step_opt:.6f} "
        f"accel_rate={report.accel_rate:.6f}"
    )
    print(f"wrote {path}")
    return 0


def _run_solve(cfg: ScenarioConfig) -> int:
    params = dict(cfg.params)
    init = params.pop("init", "spectral")
    sigma = float(params.pop("sigma", 0.0))
    stop_tol = float(params.pop("stop_tol", 1e-8))
    max_iters = int(params.pop("max_iters", 1000))
    if "algorithm" not in params:
        raise InvalidInputError("solve needs params.algorithm")
    scfg = SolverConfig(max_iters=max_iters, stop_tol_resid=stop_tol, **params)
    inst = generate_instance(cfg.kind, cfg.n1, cfg.n2, cfg.r, cfg.sampling, cfg.seeds[0])
    if init == "spectral":
        x0 = spectral_init(inst)
    elif init == "random":
        x0 = random_init(inst, sigma, seed=cfg.seeds[0])
    else:
        raise InvalidInputError(f"unknown init {init!r}")
    trace = run(inst, scfg, x0)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "trace.csv"
    trace.to_csv(path)
    print(
        f"status={trace.status} iterations={trace.iterations} "
        f"final_residual={trace.final_residual:.3e}"
    )
    print(f"wrote {path}")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    scenario = args.command.replace("-", "_")
    try:
        cfg = _config_for(args, scenario)
        if scenario == "analyze":
            return _run_analyze(cfg)
        if scenario == "solve":
            return _run_solve(cfg)
        result = SCENARIO_FUNCTIONS[scenario](cfg)
    except (InvalidInputError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FixedRankError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    write_scenario_outputs(result, cfg.out_dir)
    for check in result.checks:
        marker = "PASS" if check.passed else "FAIL"
        print(f"[{marker}] {check.name}: {check.detail}")
    return 0 if result.passed else 2


if __name__ == "__main__":
    sys.exit(main())
