"""Command line: ``freeperiod {check,solve,verify} --config PATH``.

Exit codes: 0 ok, 2 hypothesis failure, 3 solver failure, 4 verification
failure, 64 usage or configuration error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

EXIT_OK, EXIT_HYPOTHESIS, EXIT_SOLVE, EXIT_VERIFY, EXIT_USAGE = 0, 2, 3, 4, 64

log = logging.getLogger("freeperiod")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _epilog():
    from . import config
    lines = ["configuration (JSON, unknown keys rejected; print all defaults with --defaults):"]
    for section, body in config.DEFAULTS.items():
        for key, val in body.items():
            name = f"{section}.{key}"
            lines.append(f"  {name} = {config.HELP.get(name, json.dumps(val))}")
    return "\n".join(lines)


def build_parser():
    # SUPPRESS keeps a subcommand from resetting flags given before it
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", metavar="PATH", help="problem configuration (JSON)")
    common.add_argument("--threads", type=int, metavar="N", help="cap on worker threads")
    common.add_argument("--seed", type=int, help="reserved; the pipeline is deterministic")
    common.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"],
                        help="progress logging on standard error (default INFO)")
    p = _Parser(prog="freeperiod", parents=[common],
                formatter_class=argparse.RawDescriptionHelpFormatter,
                description="Periodic orbits of prescribed energy by a penalized free-period "
                            "minimax method.", epilog=_epilog())
    p.add_argument("--defaults", action="store_true", help="print the default configuration")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.add_parser("check", parents=[common], help="run the hypothesis diagnostics")
    sub.add_parser("solve", parents=[common], help="compute and certify an orbit")
    v = sub.add_parser("verify", parents=[common], help="re-certify a stored orbit CSV")
    v.add_argument("--orbit", metavar="CSV", help="orbit file (default: output.orbit_csv)")
    return p


def _limit_threads(n):
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)


def _write(path, text):
    if path:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def summary_json(summary) -> str:
    return json.dumps(summary, indent=2, sort_keys=True, allow_nan=False) + "\n"


def cmd_check(cfg) -> int:
    from . import problem as pb
    prob = pb.build_problem(cfg)
    report = pb.run_checks(prob)
    from .solver import _jsonable
    doc = _jsonable({"problem": prob.name, "all_ok": report.all_ok, **report.to_dict()})
    text = json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"
    _write(cfg["output"]["report_json"], text)
    sys.stdout.write(text)
    return EXIT_OK if report.all_ok else EXIT_HYPOTHESIS


def cmd_solve(cfg) -> int:
    from . import solver
    from . import verify as vf
    from .errors import FreePeriodError
    try:
        result = solver.solve(cfg)
    except solver.HypothesisFailure as exc:
        log.error("%s", exc)
        return EXIT_HYPOTHESIS
    except FreePeriodError as exc:
        log.error("%s", exc)
        return EXIT_SOLVE
    out = cfg["output"]
    if out["orbit_csv"]:
        vf.write_orbit_csv(result.orbit, out["orbit_csv"])
    text = summary_json(result.summary)
    _write(out["summary_json"], text)
    if out["family_dump"]:
        _write(out["family_dump"], result.family.to_json())
    brief = {k: result.summary[k] for k in ("problem", "T", "c", "eps_final", "certified")}
    sys.stdout.write(json.dumps(brief, sort_keys=True) + "\n")
    if not result.certified:
        log.error("orbit failed certification: %s", result.summary["certificates"])
        return EXIT_SOLVE
    return EXIT_OK


def verify_orbit(orbit, spec, chart, rtol=1e-10, closure_tol=1e-4, h_tol=1e-6):
    """Checks run by ``verify``: shooting closure and Hamiltonian consistency."""
    import numpy as np

    from . import geometry as geo
    from . import potential as pot
    from . import verify as vf
    closure, deviation = vf.shooting_crosscheck(orbit, spec, chart, rtol)
    wgt = geo.conformal_weight(chart, orbit.q)
    H = 0.5 * wgt * np.sum(orbit.qdot ** 2, axis=-1) - pot.eval_U(spec, orbit.q)
    h_mismatch = float(np.max(np.abs(H - orbit.H)))
    h_spread = float(np.max(orbit.H) - np.min(orbit.H))
    result = {"shooting_closure": closure, "shooting_deviation": deviation,
              "hamiltonian_mismatch": h_mismatch, "hamiltonian_spread": h_spread}
    if chart.family == geo.FLAT_TORUS:
        result["winding"] = [int(w) for w in vf.winding_numbers(orbit, chart)]
    ok = (closure <= closure_tol and deviation <= closure_tol and h_mismatch <= h_tol
          and h_spread <= h_tol and all(w == 0 for w in result.get("winding", [])))
    return ok, result


def cmd_verify(cfg, orbit_path) -> int:
    from . import problem as pb
    from . import verify as vf
    from .errors import FreePeriodError
    path = orbit_path or cfg["output"]["orbit_csv"]
    if not path:
        log.error("no orbit file given (use --orbit or output.orbit_csv)")
        return EXIT_USAGE
    if not os.path.isfile(path):
        log.error("orbit file not found: %s", path)
        return EXIT_USAGE
    prob = pb.build_problem(cfg)
    try:
        orbit = vf.read_orbit_csv(path, prob.chart)
        ok, result = verify_orbit(orbit, prob.spec, prob.chart, cfg["output"]["shooting_rtol"])
    except FreePeriodError as exc:
        log.error("%s", exc)
        return EXIT_VERIFY
    sys.stdout.write(json.dumps({"ok": ok, **result}, sort_keys=True) + "\n")
    return EXIT_OK if ok else EXIT_VERIFY


def main(argv=None) -> int:
    # thread caps must be in the environment before numpy is imported
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--threads", type=int)
    known, _ = pre.parse_known_args(argv)
    if known.threads is not None and known.threads > 0:
        _limit_threads(known.threads)
    parser = build_parser()
    args = parser.parse_args(argv)
    for name, default in (("config", None), ("threads", None), ("seed", 0), ("log_level", "INFO"),
                          ("orbit", None)):
        if not hasattr(args, name):
            setattr(args, name, default)
    if args.threads is not None:
        if args.threads < 1:
            parser.error("--threads must be positive")
    logging.basicConfig(level=getattr(logging, args.log_level), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    from . import config
    from .errors import ConfigError
    if args.defaults:
        sys.stdout.write(config.dumps(config.defaults()) + "\n")
        return EXIT_OK
    if args.command is None:
        parser.error("a subcommand is required (check, solve, verify)")
    try:
        cfg = config.load(args.config) if args.config else config.resolve({})
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    try:
        if args.command == "check":
            return cmd_check(cfg)
        if args.command == "solve":
            return cmd_solve(cfg)
        return cmd_verify(cfg, args.orbit)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
