"""Command-line front end.

Subcommands::

    mutsis simulate      --config FILE --out DIR [--seed S] [--controller C] [--horizon T] [--stride K]
    mutsis analyze       (--config FILE | --run DIR) --out DIR [--epsilon E]
    mutsis verify-bounds (--config FILE | --run DIR) --out DIR [--epsilon E] [--fmax F]
    mutsis batch         --config FILE --out DIR [--seeds 0-9] [--controller none,centralized] [--jobs J]

Exit status: 0 success, 1 configuration or input error, 2 model assumption
violated (the message names the step and node), 3 a proven bound or
decrease property failed.
"""

from __future__ import annotations

import argparse
import csv
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .config import ConfigError
from .dynamics import Trajectory, first_below, fit_decay, fmt, rho_tail_start, simulate
from .mitigation import (AppliedSequence, Controller, ControllerConfigError, check_theorem3_hypotheses,
                         check_theorem4_hypotheses)
from .model import AssumptionError, ModelError, state_matrix
from .netgen import ScenarioConfigError
from .spectral import slow_variation_constants, verify_appendix_bounds
from .stability import (check_theorem1, check_theorem2, verify_lyapunov_decrease_T1,
                        verify_lyapunov_decrease_T2)
from .svg import Chart

EXIT_OK, EXIT_CONFIG, EXIT_ASSUMPTION, EXIT_BOUND = 0, 1, 2, 3
ERADICATED = 1e-6


class BoundViolation(RuntimeError):
    pass


def _load(args) -> cfgmod.RunConfig:
    if getattr(args, "run", None):
        path = Path(args.run) / "config.yaml"
        if not path.is_file():
            raise ConfigError(f"{args.run}: no config.yaml in run directory")
    elif args.config:
        path = Path(args.config)
    else:
        raise ConfigError("either --config or --run is required")
    cfg = cfgmod.load_config(path)
    return cfgmod.override(cfg, seed=getattr(args, "seed", None), controller=getattr(args, "controller", None),
                           horizon=getattr(args, "horizon", None), stride=getattr(args, "stride", None))


def _run(cfg, keep_states: bool):
    """Simulate ``cfg``; returns the trajectory and the closed-loop sequence."""
    seq, x0 = cfgmod.build(cfg)
    ctrl = None if cfg.controller == "none" else Controller(cfg.controller, cfg.h, cfg.eta)
    traj = simulate(seq, x0, ctrl, rho_stride=cfg.stride, keep_states=keep_states)
    applied = seq if ctrl is None else AppliedSequence(seq, ctrl.trace)
    return traj, seq, applied


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_rho_csv(traj: Trajectory, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "rho_M"])
        for k in np.flatnonzero(~np.isnan(traj.rho)):
            w.writerow([int(k), fmt(traj.rho[k])])


def write_charts(traj: Trajectory, out: Path, label: str):
    k = traj.k
    Chart("Average infection level of the virus over time", "k", "average infection") \
        .add(label, k, traj.avg_infection).write(out / "avg_infection.svg")
    Chart("ρ(M(k)) of the virus over time", "k", "ρ(M(k))", hlines=[(1.0, "ρ = 1")]) \
        .add(label, k, traj.rho).write(out / "rho.svg")


def run_summary(traj: Trajectory) -> dict:
    trace = traj.trace
    return {
        "final_avg_infection": float(traj.avg_infection[-1]),
        "eradication_k": first_below(traj.avg_infection, ERADICATED),
        "rho_tail_start": rho_tail_start(traj.rho),
        "saturation_k": None if trace is None else trace.saturation_time(),
    }


def cmd_simulate(cfg, out_dir, per_node: bool = False) -> dict:
    out = _out_dir(out_dir)
    (out / "config.yaml").write_text(cfgmod.dump_config(cfg))
    traj, _, _ = _run(cfg, keep_states=per_node)
    traj.to_csv(out / "trajectory.csv", per_node=per_node)
    write_rho_csv(traj, out / "rho.csv")
    if traj.trace is not None:
        traj.trace.to_csv(out / "controller_trace.csv")
    write_charts(traj, out, cfg.controller)
    return run_summary(traj)


def _fmt_opt(v) -> str:
    return "" if v is None else str(v)


def cmd_analyze(cfg, out_dir, epsilon: float = 0.5) -> tuple[str, bool]:
    """Certificates, decrease checks and decay fit; returns ``(summary, sound)``."""
    out = _out_dir(out_dir)
    traj, raw, applied = _run(cfg, keep_states=True)
    t1 = check_theorem1(applied)
    t2 = check_theorem2(applied, epsilon)
    fit = fit_decay(traj)
    dec1 = verify_lyapunov_decrease_T1(traj)
    (out / "certificate_T1.txt").write_text(t1.to_text())
    (out / "certificate_T2.txt").write_text(t2.to_text())
    if len(t1.rho_series):
        t1.to_csv(out / "certificate_T1.csv")
        t2.to_csv(out / "certificate_T2.csv")
    (out / "decrease_T1.txt").write_text(dec1.to_text())
    sound = not (t1.holds and not dec1.ok)
    lines = [f"T1 certificate: {t1.verdict} (max rho {t1.rho_max!r})",
             f"T2 certificate: {t2.verdict}"]
    if t2.constants is not None and t2.constants.rho_ok:
        dec2 = verify_lyapunov_decrease_T2(traj, applied, t2.constants)
        (out / "decrease_T2.txt").write_text(dec2.to_text())
        lines.append(f"quadratic Lyapunov decrease: {'ok' if dec2.ok else f'{len(dec2.violations)} violations'}")
        sound = sound and not (t2.holds and not dec2.ok)
    else:
        (out / "decrease_T2.txt").write_text("lyapunov: quadratic_Q\nskipped: some rho(M(k)) >= 1\n")
    lines.append(f"half-squared-norm decrease: {'ok' if dec1.ok else f'{len(dec1.violations)} violations'}")
    if fit.healthy:
        decay = "already healthy"
    else:
        decay = f"alpha={fit.alpha!r} omega={fit.omega!r} points={fit.points}"
    (out / "decay.txt").write_text(decay + "\n")
    lines.append(f"decay fit: {decay}")
    if cfg.controller != "none":
        hyp = (check_theorem3_hypotheses if cfg.controller == "centralized" else check_theorem4_hypotheses)(raw)
        (out / "controller_hypotheses.txt").write_text(hyp.to_text())
        lines.append(f"controller hypotheses: {'pass' if hyp.holds else f'{len(hyp.failures)} failures'}")
    return "\n".join(lines) + "\n", sound


def cmd_verify_bounds(cfg, out_dir, epsilon: float = 0.5, fmax: int = 64):
    out = _out_dir(out_dir)
    _, _, applied = _run(cfg, keep_states=False)
    h = applied.h
    consts = slow_variation_constants((state_matrix(s, h) for s in applied), epsilon)
    report = verify_appendix_bounds((state_matrix(s, h) for s in applied), consts, fmax)
    (out / "bounds.txt").write_text(report.to_text())
    return report


def parse_seeds(text: str) -> list[int]:
    seeds: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        lo, sep, hi = part.partition("-")
        try:
            seeds += list(range(int(lo), int(hi) + 1)) if sep else [int(lo)]
        except ValueError:
            raise ConfigError(f"--seeds: cannot parse {part!r}") from None
    if not seeds:
        raise ConfigError("--seeds: no seeds given")
    return seeds


def _batch_job(job):
    cfg, out = job
    return cmd_simulate(cfg, out)


def cmd_batch(cfg, out_dir, seeds: list[int], controllers: list[str], jobs: int = 1) -> Path:
    out = _out_dir(out_dir)
    grid = [(c, s) for c in controllers for s in seeds]
    work = [(cfgmod.override(cfg, seed=s, controller=c), out / c / f"seed_{s}") for c, s in grid]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_batch_job, work))
    else:
        results = [_batch_job(w) for w in work]
    path = out / "batch_summary.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["controller", "seed", "final_avg_infection", "eradication_k", "rho_tail_start", "saturation_k"])
        for (c, s), r in zip(grid, results):
            w.writerow([c, s, repr(r["final_avg_infection"]), _fmt_opt(r["eradication_k"]),
                        _fmt_opt(r["rho_tail_start"]), _fmt_opt(r["saturation_k"])])
    return path


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mutsis", description="Time-varying networked SIS epidemics.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, run_dir=False):
        src = p.add_mutually_exclusive_group(required=True) if run_dir else p
        src.add_argument("--config", help="YAML run configuration")
        if run_dir:
            src.add_argument("--run", help="output directory of an earlier simulate run")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--controller", choices=cfgmod.CONTROLLERS)
        p.add_argument("--horizon", type=int)
        p.add_argument("--stride", type=int, help="record rho(M(k)) every STRIDE steps (0 disables)")

    p = sub.add_parser("simulate", help="run one scenario and write CSV and SVG output")
    common(p)
    p.add_argument("--per-node", action="store_true", help="add x_i columns to trajectory.csv")
    p = sub.add_parser("analyze", help="evaluate stability certificates on a run")
    common(p, run_dir=True)
    p.add_argument("--epsilon", type=float, default=0.5)
    p = sub.add_parser("verify-bounds", help="check the slow-variation bounds along a run")
    common(p, run_dir=True)
    p.add_argument("--epsilon", type=float, default=0.5)
    p.add_argument("--fmax", type=int, default=64, help="largest matrix power checked")
    p = sub.add_parser("batch", help="run a controller x seed grid")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seeds", default=None, help="e.g. 0-9 or 1,4,7 (default: the config seed)")
    p.add_argument("--controller", default=None, help="comma-separated controllers (default: the config's)")
    p.add_argument("--horizon", type=int)
    p.add_argument("--stride", type=int)
    p.add_argument("--jobs", type=int, default=1)
    return parser


def _dispatch(args) -> int:
    if args.command == "batch":
        cfg = cfgmod.override(cfgmod.load_config(args.config), horizon=args.horizon, stride=args.stride)
        seeds = parse_seeds(args.seeds) if args.seeds else [cfg.seed]
        controllers = args.controller.split(",") if args.controller else [cfg.controller]
        for c in controllers:
            if c not in cfgmod.CONTROLLERS:
                raise ConfigError(f"--controller: unknown controller {c!r}")
        path = cmd_batch(cfg, args.out, seeds, controllers, max(1, args.jobs))
        print(f"wrote {len(seeds) * len(controllers)} runs; summary in {path}")
        return EXIT_OK
    cfg = _load(args)
    if args.command == "simulate":
        r = cmd_simulate(cfg, args.out, args.per_node)
        print(f"final average infection {r['final_avg_infection']!r}; "
              f"below {ERADICATED:g} from k={_fmt_opt(r['eradication_k']) or 'never'}; "
              f"rho < 1 from k={_fmt_opt(r['rho_tail_start']) or 'never'}")
        return EXIT_OK
    if not 0 < args.epsilon < 1:
        raise ConfigError(f"--epsilon must lie in (0, 1), got {args.epsilon}")
    if args.command == "analyze":
        text, sound = cmd_analyze(cfg, args.out, args.epsilon)
        sys.stdout.write(text)
        if not sound:
            raise BoundViolation("Lyapunov decrease failed although the certificate premises hold")
        return EXIT_OK
    report = cmd_verify_bounds(cfg, args.out, args.epsilon, args.fmax)
    sys.stdout.write(report.to_text() if not report.applicable else
                     f"checked {len(report.checks)} inequalities, {len(report.violations)} violated\n")
    if report.violations:
        raise BoundViolation(f"{len(report.violations)} proven bounds violated (first: {report.violations[0]})")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except (ConfigError, ScenarioConfigError, ControllerConfigError, ModelError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except AssumptionError as err:
        print(f"assumption violated: {err}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except BoundViolation as err:
        print(f"bound violation: {err}", file=sys.stderr)
        return EXIT_BOUND


if __name__ == "__main__":
    sys.exit(main())
