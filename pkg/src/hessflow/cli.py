"""Command-line front end: one command per process, files under --out.

Exit codes: 0 success, 1 validation problem (bad config, bad arguments,
missing files), 2 run failure (step failure, timeout, form violation),
3 a certification or verification check that ran fine and found a
violation.
"""

from __future__ import annotations

import argparse
import os
import sys

from .cone_geometry import LiftedPoint, verify_concavity_gap, verify_parabolic_gap
from .config import load_config
from .errors import (ConeViolationError, ConfigError, ConstraintViolationError,
                     FormViolationError, InvalidConfigurationError,
                     StepFailureError, SteadyStateTimeoutError)
from .flow import FlowState, solve, steady_state
from .grids import ScalarField
from .monitors import MonitorOptions, monitor_observer, record, write_monitor_csv
from .report import render_monitor_charts
from .snapshot import write_snapshot
from .structure import check_structure
from .subsolutions import construct_linear_subsolution, verify_subsolution

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_RUNFAIL = 2
EXIT_VIOLATION = 3

_VALIDATION_ERRORS = (ConfigError, InvalidConfigurationError,
                      ConstraintViolationError, FileNotFoundError, ValueError)
_RUN_ERRORS = (StepFailureError, SteadyStateTimeoutError, FormViolationError,
               ConeViolationError)


class _Emitter:
    def __init__(self, quiet):
        self.quiet = quiet

    def __call__(self, *lines):
        if not self.quiet:
            for line in lines:
                print(line)

    def error(self, message):
        print(f"hessflow: {message}", file=sys.stderr)


def _require_config(args):
    if args.config is None:
        raise InvalidConfigurationError(
            f"{args.command} needs --config PATH")
    return load_config(args.config)


def _monitor_options(cfg):
    usub = None
    if cfg.monitors.subsolution == "linear":
        usub = construct_linear_subsolution(cfg.problem,
                                            safety=cfg.monitors.safety)
    return MonitorOptions(usub=usub, weight=cfg.monitors.weight)


def _write_states(states, grid, out_dir):
    paths = []
    for idx, state in enumerate(states):
        field = ScalarField(grid, state.u.values, time_tag=state.t)
        path = os.path.join(out_dir, f"snapshot_{idx:06d}.hfld")
        write_snapshot(path, field)
        paths.append(path)
    return paths


def cmd_check_operator(args, emit):
    cfg = _require_config(args)
    rep = check_structure(cfg.problem.operator,
                          sample_budget=cfg.structure.sample_budget,
                          seed=args.seed, f_band=cfg.structure.f_band)
    emit(*rep.lines())
    if not rep.all_hold:
        emit.error("structure conditions violated")
        return EXIT_VIOLATION
    return EXIT_OK


def cmd_certify_cones(args, emit):
    cfg = _require_config(args)
    cert = cfg.certify
    op = cfg.problem.operator
    ran_any = False
    ok = True

    if cert.beta is not None:
        ran_any = True
        gap = verify_concavity_gap(op, anchors=cert.mu, beta=cert.beta,
                                   budget=cert.gap_budget, seed=args.seed)
        eps_txt = ("none" if gap.epsilon_hat is None
                   else f"{gap.epsilon_hat:.17g}")
        emit(f"concavity gap: beta={gap.beta:g} budget={gap.budget} "
             f"seed={gap.seed}",
             f"  qualifying={gap.qualifying_count} "
             f"violations={gap.violation_count} "
             f"empty_constraint={gap.empty_constraint}",
             f"  epsilon_hat={eps_txt}")
        ok = ok and gap.certified

    if cert.levels is not None:
        ran_any = True
        anchors = [LiftedPoint(row[:-1], row[-1]) for row in cert.anchors]
        for level in cert.levels:
            pg = verify_parabolic_gap(op, level, anchors, eps=cert.eps,
                                      budget=cert.parabolic_budget,
                                      seed=args.seed, pad=cert.pad)
            theta_txt = "none" if pg.theta is None else f"{pg.theta:.17g}"
            radius_txt = "none" if pg.radius is None else f"{pg.radius:g}"
            emit(f"parabolic gap: level={level:g} eps={pg.eps:g} "
                 f"pad={pg.pad:g} seed={pg.seed}",
                 f"  certified={pg.certified} radius={radius_txt} "
                 f"theta={theta_txt}")
            for note in pg.notices:
                emit(f"  note: {note}")
            ok = ok and pg.certified

    if not ran_any:
        raise InvalidConfigurationError(
            "[certify] has nothing to run; set beta+mu or levels+anchors")
    if not ok:
        emit.error("cone certification failed")
        return EXIT_VIOLATION
    return EXIT_OK


def cmd_verify_subsolution(args, emit):
    cfg = _require_config(args)
    usub = construct_linear_subsolution(cfg.problem,
                                        safety=cfg.subsolution.safety)
    rep = verify_subsolution(cfg.problem, usub,
                             times=cfg.subsolution.times,
                             strict_delta=cfg.subsolution.strict_delta)
    emit(*rep.lines())
    wanted = rep.strict if cfg.subsolution.strict_delta > 0 else rep.satisfied
    if not wanted:
        emit.error("subsolution conditions violated")
        return EXIT_VIOLATION
    return EXIT_OK


def cmd_solve(args, emit):
    cfg = _require_config(args)
    os.makedirs(args.out, exist_ok=True)
    options = _monitor_options(cfg)
    traj = solve(cfg.problem, observer=monitor_observer(options),
                 sample_every=cfg.monitors.sample_every,
                 state_every=cfg.monitors.snapshot_every)
    csv_path = os.path.join(args.out, "monitors.csv")
    write_monitor_csv(csv_path, traj.rows)
    paths = _write_states(traj.states, cfg.problem.grid, args.out)
    emit(f"terminal event: {traj.terminal_event} at t={traj.final.t:g}",
         f"wrote {csv_path} ({len(traj.rows)} rows)",
         f"wrote {len(paths)} snapshots")
    return EXIT_OK


def cmd_steady(args, emit):
    cfg = _require_config(args)
    os.makedirs(args.out, exist_ok=True)
    field, info = steady_state(cfg.problem, tol=cfg.steady.tol,
                               max_steps=cfg.steady.max_steps)
    path = os.path.join(args.out, "steady_state.hfld")
    write_snapshot(path, field)
    # single summary row; supUt column carries the elliptic residual
    row = record(FlowState(u=field, t=field.time_tag), cfg.problem,
                 _monitor_options(cfg))
    row.sup_ut = info["residual"]
    csv_path = os.path.join(args.out, "monitors.csv")
    write_monitor_csv(csv_path, [row])
    emit(f"steady state after {info['steps']} steps, "
         f"residual={info['residual']:.3e}, dt_final={info['dt_final']:g}",
         f"wrote {path}")
    return EXIT_OK


def cmd_report(args, emit):
    csv_path = os.path.join(args.out, "monitors.csv")
    if not os.path.exists(csv_path):
        raise FileNotFoundError(f"{csv_path}: no monitor CSV to chart")
    paths = render_monitor_charts(csv_path, args.out)
    for path in paths:
        emit(f"wrote {path}")
    return EXIT_OK


COMMANDS = {
    "check-operator": cmd_check_operator,
    "certify-cones": cmd_certify_cones,
    "verify-subsolution": cmd_verify_subsolution,
    "solve": cmd_solve,
    "steady": cmd_steady,
    "report": cmd_report,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="hessflow",
        description="Nonlinear parabolic Hessian flows: runs, monitors, "
                    "structure and cone certification.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None,
                       help="run configuration file")
        p.add_argument("--seed", type=int, default=0,
                       help="sampling seed for certification commands")
        p.add_argument("--out", default="hessflow_out",
                       help="output directory")
        p.add_argument("--quiet", action="store_true",
                       help="suppress normal output")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    emit = _Emitter(args.quiet)
    try:
        return COMMANDS[args.command](args, emit)
    except _VALIDATION_ERRORS as exc:
        emit.error(str(exc))
        return EXIT_INVALID
    except _RUN_ERRORS as exc:
        emit.error(str(exc))
        return EXIT_RUNFAIL


if __name__ == "__main__":
    sys.exit(main())
