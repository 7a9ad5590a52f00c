"""Command-line interface.

Subcommands:

* ``run <config>``: drive a simulation, writing the energy log and
  optional snapshots.
* ``cfl <config>``: print the stability bound and the Rayleigh quotient.
* ``converge <config> --levels n``: temporal refinement study.
* ``check``: headless invariant suite.

Exit codes: 0 success, 1 check-suite failure, 2 CFL violation or
instability, 3 inner-solver failure, 4 enforced energy-inequality
violation, 5 I/O error, 64 usage/config errors.
"""

import argparse
import os
import sys

from . import io as sdio
from .checks import run_checks
from .config import (
    build_simulation,
    integrator_config,
    parse_config,
)
from .errors import (
    CflViolationError,
    ConfigError,
    EnergyInequalityError,
    InstabilityError,
    SolverError,
    StagdynError,
)
from .integrator import max_stable_timestep, run_simulation

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CFL = 2
EXIT_SOLVER = 3
EXIT_ENERGY = 4
EXIT_IO = 5
EXIT_USAGE = 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _add_common(sp):
    # accepted both before and after the subcommand; SUPPRESS keeps the
    # top-level values when the flag is absent here
    sp.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                    help="override the configured seed")
    sp.add_argument("--quiet", action="store_true",
                    default=argparse.SUPPRESS)
    sp.add_argument("--out-dir", default=argparse.SUPPRESS,
                    help="override the configured output directory")


def _build_parser():
    p = _Parser(prog="stagdyn",
                description="staggered explicit/implicit elastodynamics "
                            "with dissipative internal variables")
    p.add_argument("--check", action="store_true",
                   help="run the invariant suite and exit")
    p.add_argument("--seed", type=int, default=None,
                   help="override the configured seed")
    p.add_argument("--quiet", action="store_true")
    p.add_argument("--out-dir", default=None,
                   help="override the configured output directory")
    sub = p.add_subparsers(dest="command")

    run_p = sub.add_parser("run", help="run a simulation")
    run_p.add_argument("config")
    run_p.add_argument("--check", action="store_true", dest="run_check",
                       help="run the invariant suite instead")
    _add_common(run_p)

    cfl_p = sub.add_parser("cfl", help="print tau_max and lambda")
    cfl_p.add_argument("config")
    _add_common(cfl_p)

    conv_p = sub.add_parser("converge", help="temporal refinement study")
    conv_p.add_argument("config")
    conv_p.add_argument("--levels", type=int, default=3)
    _add_common(conv_p)

    check_p = sub.add_parser("check", help="run the invariant suite")
    _add_common(check_p)
    return p


def _load_config(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_IO)
    return parse_config(text)


def _apply_overrides(cfg, args):
    if args.seed is not None:
        cfg.output["seed"] = args.seed
    if args.out_dir is not None:
        cfg.output["out_dir"] = args.out_dir


def cmd_run(args):
    cfg = _load_config(args.config)
    _apply_overrides(cfg, args)
    disc, material, loading, state, _ = build_simulation(cfg)
    icfg = integrator_config(cfg, disc, material, state)

    out_dir = cfg.output["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    log_path = os.path.join(out_dir, cfg.output["energy_log"])
    every = cfg.output["snapshot_every"]
    fields = cfg.output["snapshot_fields"]

    def snap(st):
        path = os.path.join(out_dir, f"snapshot_{st.k:06d}.bin")
        sdio.write_snapshot(path, sdio.snapshot_fields(st, disc, fields),
                            disc.dim)

    ledgers = []
    try:
        with sdio.EnergyLogWriter(log_path) as log:
            if every:
                snap(state)

            def on_step(st, ledger):
                ledgers.append(ledger)
                log.write(ledger)
                if every and st.k % every == 0:
                    snap(st)

            final, _ = run_simulation(disc, material, loading, icfg, state,
                                      on_step=on_step)
    except (CflViolationError, InstabilityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CFL
    except EnergyInequalityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ENERGY
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"error: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO

    if not args.quiet and ledgers:
        last = ledgers[-1]
        print(f"steps: {len(ledgers)}  t_end: {last.time:.6g}  "
              f"tau: {icfg.tau:.6g}")
        print(f"final energy: {last.total:.12g}  "
              f"max |residual|: {max(abs(l.residual) for l in ledgers):.3e}  "
              f"min a: {min(l.stability_coeff for l in ledgers):.6g}")
        print(f"energy log: {log_path}")
    return EXIT_OK


def cmd_cfl(args):
    cfg = _load_config(args.config)
    _apply_overrides(cfg, args)
    disc, material, loading, state, _ = build_simulation(cfg)
    eta = cfg.integrator["eta"]
    tau_max, lam = max_stable_timestep(disc, material, state.z, eta)
    print(f"lambda: {lam:.12g}")
    print(f"tau_max(eta={eta:g}): {tau_max:.12g}")
    if cfg.integrator["tau"] != "auto":
        tau = cfg.integrator["tau"]
        verdict = "OK" if tau <= tau_max else "VIOLATION"
        print(f"configured tau: {tau:.12g}  -> {verdict}")
    return EXIT_OK


def cmd_converge(args):
    from .oracle import temporal_self_convergence, temporal_finest_grid

    cfg = _load_config(args.config)
    _apply_overrides(cfg, args)
    if args.levels < 3:
        print("error: --levels must be >= 3", file=sys.stderr)
        return EXIT_USAGE
    disc, material, loading, state, _ = build_simulation(cfg)
    icfg = integrator_config(cfg, disc, material, state)
    t_end = icfg.t_end
    tau0 = icfg.tau
    taus = [tau0 / 2 ** i for i in range(args.levels)]
    try:
        if material.supports_reference_integrator():
            report = temporal_self_convergence(disc, material, loading,
                                               state, t_end, taus)
        else:
            report = temporal_finest_grid(disc, material, loading, state,
                                          t_end, taus)
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    print(report.table())
    for row in report.rows():
        print(row)
    return EXIT_OK


def cmd_check(args):
    seed = args.seed if args.seed is not None else 1234
    failures = run_checks(seed=seed, quiet=args.quiet)
    return EXIT_CHECK_FAILED if failures else EXIT_OK


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.check or args.command == "check":
            return cmd_check(args)
        if args.command == "run":
            if getattr(args, "run_check", False):
                return cmd_check(args)
            return cmd_run(args)
        if args.command == "cfl":
            return cmd_cfl(args)
        if args.command == "converge":
            return cmd_converge(args)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StagdynError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
