"""Command-line front end: ``qwhile run|fixpoint|trace|check``.

Exit codes::

    0  success
    1  the program file cannot be read or parsed
    2  the program is ill-formed (validation diagnostics)
    3  unbounded loop in unitary mode without --n
    4  fixpoint iteration hit --max-iter without converging
    5  the property suite reported a failure
    6  ancilla budget exceeded
"""
from __future__ import annotations

import argparse
import json
import sys
from typing import Sequence

from . import oracle
from .lang import Decl, ParseError, QubitGuard, ValidationError, While, parse, statements
from .semantics import (AncillaBudgetError, EvalConfig, Mode, UnboundedLoopError, evaluate,
                        report_to_json, trace)
from .state import dump_state

EXIT_OK = 0
EXIT_PARSE = 1
EXIT_INVALID = 2
EXIT_UNBOUNDED = 3
EXIT_NO_CONVERGENCE = 4
EXIT_CHECK_FAILED = 5
EXIT_ANCILLA_BUDGET = 6

SCHEMA_VERSION = "1"


class _Exit(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _load(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            source = fh.read()
    except OSError as exc:
        raise _Exit(EXIT_PARSE, f"{path}: cannot read: {exc.strerror}") from None
    try:
        return parse(source)
    except ParseError as exc:
        raise _Exit(EXIT_PARSE, f"{path}:{exc}") from None
    except ValidationError as exc:
        lines = "\n".join(f"{path}:{d}" for d in exc.diagnostics)
        raise _Exit(EXIT_INVALID, lines) from None


def _emit(obj: dict, pretty_text: str | None, args) -> None:
    if getattr(args, "pretty", False) and pretty_text is not None:
        print(pretty_text)
    else:
        print(json.dumps(obj, indent=2))


def _fmt_state(rows: list[dict]) -> str:
    if not rows:
        return "  0"
    out = []
    for r in rows:
        regs = " ".join(f"{k}={v}" for k, v in r["regs"].items())
        tape = r["ancillas"] or "0"
        out.append(f"  {r['re']:+.9g}{r['im']:+.9g}i  |{tape}>  {regs}")
    return "\n".join(out)


def _fmt_report(obj: dict) -> str:
    head = (f"mode={obj['mode']} iterations={obj['iterations']} converged={obj['converged']} "
            f"terminated_mass={obj['terminated_mass']:.12g} ancillas={obj['ancillas_used']}")
    notes = "".join(f"\nnote: {n}" for n in obj["notes"])
    return head + notes + "\n" + _fmt_state(obj["state"])


def _evaluate(decls, program, cfg: EvalConfig):
    try:
        return evaluate(decls, program, cfg=cfg)
    except UnboundedLoopError as exc:
        raise _Exit(EXIT_UNBOUNDED, str(exc)) from None
    except AncillaBudgetError as exc:
        raise _Exit(EXIT_ANCILLA_BUDGET, str(exc)) from None


def _run_config(args) -> EvalConfig:
    mode = Mode(args.mode)
    kw = {"prune_eps": args.prune, "max_ancillas": args.max_ancillas}
    if args.n is not None:
        return EvalConfig.bounded(args.n, mode, **kw)
    if mode is Mode.LINEAR:
        return EvalConfig.converging(**kw)
    return EvalConfig(mode=mode, **kw)


def cmd_run(args) -> int:
    decls, program = _load(args.file)
    report = _evaluate(decls, program, _run_config(args))
    obj = report_to_json(report, [d.name for d in decls])
    _emit(obj, _fmt_report(obj), args)
    return EXIT_OK


def cmd_fixpoint(args) -> int:
    decls, program = _load(args.file)
    if not any(isinstance(s, While) for s in statements(program)):
        raise _Exit(EXIT_INVALID, f"{args.file}: fixpoint needs a top-level unbounded while")
    cfg = EvalConfig.converging(args.eps, args.window, args.max_iter, prune_eps=args.prune,
                                max_ancillas=args.max_ancillas)
    report = _evaluate(decls, program, cfg)
    obj = report_to_json(report, [d.name for d in decls])
    _emit(obj, _fmt_report(obj), args)
    return EXIT_OK if report.converged else EXIT_NO_CONVERGENCE


def cmd_trace(args) -> int:
    decls, program = _load(args.file)
    names = [d.name for d in decls]
    try:
        report, frames = trace(decls, program, cfg=_run_config(args))
    except UnboundedLoopError as exc:
        raise _Exit(EXIT_UNBOUNDED, str(exc)) from None
    except AncillaBudgetError as exc:
        raise _Exit(EXIT_ANCILLA_BUDGET, str(exc)) from None
    obj = {
        "schema_version": SCHEMA_VERSION,
        "mode": report.mode.value,
        "frames": [{"label": lab, "state": dump_state(k, names)} for lab, k in frames],
    }
    text = "\n".join(f"{f['label']}:\n{_fmt_state(f['state'])}" for f in obj["frames"])
    _emit(obj, text, args)
    return EXIT_OK


def _suite_spaces(nmax: int):
    one = [Decl.qubit("q")]
    two = [Decl.qubit("q"), Decl.qubit("r")]
    return {"guard_only": (one, oracle.SpaceSpec(nmax, one)),
            "guard_plus_qubit": (two, oracle.SpaceSpec(nmax, two))}


def cmd_check(args) -> int:
    if args.nmax < 0 or args.trials < 1:
        raise _Exit(EXIT_INVALID, "--nmax must be >= 0 and --trials >= 1")
    suites = {}
    for name, (decls, space) in _suite_spaces(args.nmax).items():
        suites[name] = oracle.check_suite(decls, QubitGuard("q"), None, space,
                                          args.nmax, args.trials, args.seed)
    passed = all(oracle.suite_passed(s) for s in suites.values())
    obj = {"schema_version": SCHEMA_VERSION, "nmax": args.nmax, "trials": args.trials,
           "seed": args.seed, "passed": passed, "suites": suites}
    lines = []
    for name, suite in suites.items():
        for prop, r in suite.items():
            status = "ok  " if r["pass"] else "FAIL"
            lines.append(f"{status} {name:17s} {prop:25s} {r['max_deviation']:.3e} "
                         f"(tol {r['tolerance']:.0e})")
    _emit(obj, "\n".join(lines), args)
    return EXIT_OK if passed else EXIT_CHECK_FAILED


def _output_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--max-ancillas", type=int, default=100_000,
                   help="abort with exit 6 once this many ancillas are allocated")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--json", action="store_true", help="machine-readable output (default)")
    g.add_argument("--pretty", action="store_true", help="human-readable output")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qwhile", description=__doc__.split("\n")[0],
                                 epilog="exit codes: 1 parse, 2 validation, 3 unbounded loop, "
                                        "4 no convergence, 5 check failure, 6 ancilla budget",
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="evaluate a program")
    run.add_argument("file")
    run.add_argument("--mode", choices=[m.value for m in Mode], default="unitary")
    run.add_argument("--n", type=int, help="unroll every unbounded while N times")
    run.add_argument("--prune", type=float, default=0.0, metavar="EPS",
                     help="drop amplitudes of modulus <= EPS")
    _output_flags(run)
    run.set_defaults(func=cmd_run)

    fix = sub.add_parser("fixpoint", help="iterate the linear semantics until increments stall")
    fix.add_argument("file")
    fix.add_argument("--eps", type=float, default=1e-9)
    fix.add_argument("--window", type=int, default=8)
    fix.add_argument("--max-iter", type=int, default=10_000)
    fix.add_argument("--prune", type=float, default=0.0, metavar="EPS")
    _output_flags(fix)
    fix.set_defaults(func=cmd_fixpoint)

    tr = sub.add_parser("trace", help="state after every loop iteration")
    tr.add_argument("file")
    tr.add_argument("--mode", choices=[m.value for m in Mode], default="unitary")
    tr.add_argument("--n", type=int)
    tr.add_argument("--prune", type=float, default=0.0, metavar="EPS")
    _output_flags(tr)
    tr.set_defaults(func=cmd_trace)

    chk = sub.add_parser("check", help="run the dense-oracle property suite")
    chk.add_argument("--nmax", type=int, default=4)
    chk.add_argument("--trials", type=int, default=50)
    chk.add_argument("--seed", type=int, default=0)
    g = chk.add_mutually_exclusive_group()
    g.add_argument("--json", action="store_true")
    g.add_argument("--pretty", action="store_true")
    chk.set_defaults(func=cmd_check)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _Exit as exc:
        print(f"qwhile: {exc}", file=sys.stderr)
        return exc.code
    except ValueError as exc:
        print(f"qwhile: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
