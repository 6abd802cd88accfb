"""Command-line front end: list experiments, run them to CSV, verify derivatives.

Exit codes: 0 success (all checks pass), 1 a verification check came back
suspect or inconclusive, 2 usage or configuration error, 3 runtime
diagnostic (blow-up, non-convergence, singular system).
"""

from __future__ import annotations

import argparse
import csv
import math
import random
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from . import core, figures, highlevel, lab, verify
from .errors import DiagnosticError, UsageError

EXIT_OK = 0
EXIT_SUSPECT = 1
EXIT_USAGE = 2
EXIT_DIAGNOSTIC = 3


# ---------------------------------------------------------------------------
# Built-in functions for the verification suite
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VerifyCase:
    staged: verify.StagedProgram
    x: tuple[float, ...]
    note: str = ""


def _stage(name, n_in, n_out, program) -> verify.Stage:
    return verify.Stage(name, n_in, n_out, program)


def _verify_cases() -> dict[str, VerifyCase]:
    table = highlevel.SineTable(4096)
    return {
        "smooth_exp_sin": VerifyCase(
            verify.StagedProgram([
                _stage("sin", 1, 1, lambda xs: core.sin(xs[0])),
                _stage("exp", 1, 1, lambda xs: core.exp(xs[0])),
            ]),
            (0.7,),
            note="smooth reference composition",
        ),
        "fastpath_g": VerifyCase(
            verify.StagedProgram([
                _stage("identity_fastpath", 1, 1, lambda xs: highlevel.identity_fastpath(xs[0])),
            ]),
            (0.0,),
            note="constant fast branch taken exactly at x = 0",
        ),
        "fastpath_h": VerifyCase(
            verify.StagedProgram([
                _stage("identity_fastpath_consistent", 1, 1,
                       lambda xs: highlevel.identity_fastpath_consistent(xs[0])),
            ]),
            (0.0,),
            note="branch with consistent derivative at x = 0",
        ),
        "mul_fastpath": VerifyCase(
            verify.StagedProgram([
                _stage("mul_fastpath", 2, 1, lambda xs: highlevel.mul_fastpath(xs[0], xs[1])),
            ]),
            (3.0, 1.0),
            note="shortcut branch taken at y = 1",
        ),
        "vec_max_tie": VerifyCase(
            verify.StagedProgram([
                _stage("vec_max", 2, 1, lambda xs: highlevel.vec_max(xs)),
            ]),
            (2.0, 2.0),
            note="maximum with a two-way tie",
        ),
        "sin_lut": VerifyCase(
            verify.StagedProgram([
                _stage("sin_lut", 1, 1, lambda xs: highlevel.sin_lut(xs[0], table)),
            ]),
            (1.0,),
            note="piecewise-constant table lookup",
        ),
        "sin_poly": VerifyCase(
            verify.StagedProgram([
                _stage("sin_poly", 1, 1, lambda xs: highlevel.sin_poly(xs[0], 7)),
            ]),
            (1.0,),
            note="truncated series; AD is exact for the series itself",
        ),
        "log_expm1": VerifyCase(
            verify.StagedProgram([
                _stage("log_expm1", 1, 1, lambda xs: core.log(core.exp(xs[0]) - 1.0)),
            ]),
            (0.5,),
            note="cancellation-prone away from x = 0 is mild",
        ),
    }


VERIFY_IDS = tuple(_verify_cases())


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _cmd_list() -> int:
    print("experiments:")
    for name in lab.EXPERIMENTS:
        aliases = [a for a, c in lab.ALIASES.items() if c == name]
        suffix = f" (alias: {', '.join(aliases)})" if aliases else ""
        print(f"  {name}{suffix}")
    print("verify functions:")
    for name in VERIFY_IDS:
        print(f"  {name}")
    return EXIT_OK


def _parse_overrides(pairs: Sequence[str]) -> dict[str, str]:
    overrides = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep or not key:
            raise UsageError(f"override {pair!r} is not of the form key=value")
        overrides[key.strip()] = value.strip()
    return overrides


def _cmd_run(experiment: str, out: str, sets: Sequence[str], plot: bool) -> int:
    canonical = lab.resolve_experiment(experiment)
    config = lab.config_from_overrides(canonical, _parse_overrides(sets))
    _, runner = lab.EXPERIMENTS[canonical]
    records = runner(config)
    lab.write_csv(out, records)
    print(f"wrote {len(records)} records to {out}")
    if plot:
        fig_path = str(Path(out).with_suffix(".png"))
        figures.render_experiment(records, fig_path)
        print(f"wrote figure to {fig_path}")
    return EXIT_OK


def _cmd_verify(fn: str, seed: int, out: str | None, plot: bool) -> int:
    cases = _verify_cases()
    case = cases.get(fn)
    if case is None:
        raise UsageError(f"unknown verify function {fn!r}; known: {', '.join(cases)}")
    staged = case.staged
    rng = random.Random(seed)
    direction = [rng.gauss(0.0, 1.0) for _ in case.x]
    norm = math.sqrt(math.fsum(v * v for v in direction))
    direction = [v / norm for v in direction]
    y_bar = [1.0] * staged.n_out

    program = staged.as_program()
    _, y_dot = core.forward_jvp(program, list(case.x), direction)
    ad_directional = math.fsum(w * t for w, t in zip(y_bar, y_dot))

    grad_report = verify.gradcheck(program, ad_directional, list(case.x), direction)
    dot_report = verify.dot_product_test(staged, list(case.x), direction, y_bar)
    fd_report = verify.fd_vjp_check(staged, list(case.x), y_bar, seed=seed)

    print(f"VERIFY {fn} at x={list(case.x)} (seed {seed}): {case.note}")
    print(grad_report.text_summary())
    print(dot_report.text_summary())
    print(fd_report.text_summary())

    if out:
        with open(out, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(["h", "fd1_error", "fd2_error"])
            for row in grad_report.rows():
                writer.writerow([repr(row["h"]), repr(row["fd1_error"]), repr(row["fd2_error"])])
        print(f"wrote sweep to {out}")
    if plot:
        fig_path = str(Path(out).with_suffix(".png")) if out else f"gradcheck_{fn}.png"
        figures.render_gradcheck(grad_report, fig_path)
        print(f"wrote figure to {fig_path}")

    all_pass = (
        grad_report.verdict == "pass"
        and dot_report.suspect_stage is None
        and fd_report.verdict == "pass"
    )
    return EXIT_OK if all_pass else EXIT_SUSPECT


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="adlab",
        description="Automatic-differentiation pitfall laboratory and derivative verifier.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("list", help="list experiment and verify-function ids")

    p_run = sub.add_parser("run", help="run an experiment and write its CSV")
    p_run.add_argument("experiment")
    p_run.add_argument("--out", required=True, help="output CSV path")
    p_run.add_argument("--set", dest="sets", action="append", default=[],
                       metavar="KEY=VALUE", help="override a config field")
    p_run.add_argument("--seed", type=int, default=0,
                       help="accepted for symmetry; runners are deterministic")
    p_run.add_argument("--plot", action="store_true",
                       help="also render a figure next to the CSV")

    p_verify = sub.add_parser("verify", help="run the verification suite on a built-in function")
    p_verify.add_argument("function")
    p_verify.add_argument("--seed", type=int, default=0, help="seed for randomized test vectors")
    p_verify.add_argument("--out", help="write the step-size sweep as CSV")
    p_verify.add_argument("--plot", action="store_true", help="render the sweep figure")

    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE

    try:
        if args.command == "list":
            return _cmd_list()
        if args.command == "run":
            return _cmd_run(args.experiment, args.out, args.sets, args.plot)
        return _cmd_verify(args.function, args.seed, args.out, args.plot)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DiagnosticError as exc:
        print(f"diagnostic: {exc}", file=sys.stderr)
        return EXIT_DIAGNOSTIC


if __name__ == "__main__":
    sys.exit(main())
