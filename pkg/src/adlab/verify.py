"""Derivative verification: finite differences, step-size sweeps, dot-product tests.

The step-size sweep compares a claimed directional derivative against
first-order forward and second-order central differences over a grid of
step sizes. The error's convergence order separates three regimes:
truncation (error falls with h at the formula's order), roundoff (error
grows as h shrinks), and a step-size-independent plateau that reveals an
error in the claimed derivative of about the plateau's magnitude.

The dot-product test exploits that a forward sweep up to any split point
and a reverse sweep down to the same point must meet in the same scalar
psi = y_bar . J . x_dot; a split where psi jumps localizes the broken stage.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Callable, Sequence

from . import core
from .core import Program
from .errors import UsageError

_UNIT_ROUNDOFF = 2.0 ** -53

# regime/plateau detection constants (artifact choices, not derived values)
_MIN_REGIME_POINTS = 4
_MIN_PLATEAU_POINTS = 4
_PLATEAU_SLOPE_BAND = 0.5
_PLATEAU_FLOOR_FACTOR = 10.0
_SUSPECT_SLOPE2 = 1.5
_ROUNDOFF_CONSISTENT = 100.0
# composed programs accumulate many rounding errors, so the single-rounding
# noise model u*scale/h is scaled up before the 10x plateau comparison
_ROUNDOFF_ACCUM = 32.0
# a decreasing run only counts as a truncation regime when it spans at
# least this error ratio; the slope fit drops points within _FIT_TRIM of
# the run minimum, where truncation no longer dominates
_MIN_REGIME_RANGE = 100.0
_FIT_TRIM = 100.0


# ---------------------------------------------------------------------------
# Finite differences
# ---------------------------------------------------------------------------

def _shifted_eval(program: Program, x: Sequence[float], direction: Sequence[float], t: float):
    return core._as_output_tuple(program([xi + t * di for xi, di in zip(x, direction)]))


def _fd_combine(plus, minus, denom) -> float | list[float]:
    out = [(p - m) / denom for p, m in zip(plus, minus)]
    return out[0] if len(out) == 1 else out


def fd_forward(program: Program, x: Sequence[float], direction: Sequence[float], h: float):
    """First-order forward difference (f(x + h d) - f(x)) / h."""
    if h == 0.0:
        raise UsageError("finite-difference step h must be nonzero")
    if len(direction) != len(x):
        raise UsageError("direction must have the same length as x")
    return _fd_combine(_shifted_eval(program, x, direction, h),
                       _shifted_eval(program, x, direction, 0.0), h)


def fd_central(program: Program, x: Sequence[float], direction: Sequence[float], h: float):
    """Second-order central difference (f(x + h d) - f(x - h d)) / (2 h)."""
    if h == 0.0:
        raise UsageError("finite-difference step h must be nonzero")
    if len(direction) != len(x):
        raise UsageError("direction must have the same length as x")
    return _fd_combine(_shifted_eval(program, x, direction, h),
                       _shifted_eval(program, x, direction, -h), 2.0 * h)


def default_h_grid(n: int = 24, largest: float = 1e-1, smallest: float = 1e-12) -> tuple[float, ...]:
    """Log-spaced step sizes, strictly decreasing."""
    if n < 2 or largest <= smallest or smallest <= 0.0:
        raise UsageError("invalid h grid parameters")
    ratio = math.log10(largest / smallest) / (n - 1)
    return tuple(largest * 10.0 ** (-ratio * i) for i in range(n))


# ---------------------------------------------------------------------------
# Step-size sweep with convergence-order fits
# ---------------------------------------------------------------------------

@dataclass
class GradCheckReport:
    """Outcome of one step-size sweep against a claimed derivative."""

    h_grid: tuple[float, ...]
    fd1_error: tuple[float, ...]
    fd2_error: tuple[float, ...]
    slope1: float | None
    slope2: float | None
    plateau: float | None
    verdict: str  # "pass" | "suspect" | "inconclusive"
    notes: tuple[str, ...] = ()
    regime1: tuple[int, int] | None = None  # [start, end) indices into h_grid
    regime2: tuple[int, int] | None = None

    def rows(self) -> list[dict]:
        return [
            {"h": h, "fd1_error": e1, "fd2_error": e2}
            for h, e1, e2 in zip(self.h_grid, self.fd1_error, self.fd2_error)
        ]

    def text_summary(self) -> str:
        parts = []
        if self.slope1 is not None:
            parts.append(f"slope1={self.slope1:.3f}")
        if self.slope2 is not None:
            parts.append(f"slope2={self.slope2:.3f}")
        if self.plateau is not None:
            parts.append(f"plateau={self.plateau:.3e}")
        parts.extend(self.notes)
        detail = ", ".join(parts) if parts else "no metrics"
        return f"CHECK gradcheck: {self.verdict.upper()} — {detail}"


def _longest_decreasing_run(errors: Sequence[float]) -> tuple[int, int] | None:
    """Longest contiguous strictly-decreasing run over nonzero errors.

    Scanning starts from the largest step size; ties keep the earlier run.
    A run must also span a meaningful error range, otherwise it is just a
    drifting noise segment. Returns [start, end) or None.
    """
    best = None
    start = 0
    n = len(errors)
    while start < n:
        if errors[start] <= 0.0:
            start += 1
            continue
        end = start + 1
        while end < n and 0.0 < errors[end] < errors[end - 1]:
            end += 1
        if (
            end - start >= _MIN_REGIME_POINTS
            and errors[start] >= _MIN_REGIME_RANGE * errors[end - 1]
            and (best is None or end - start > best[1] - best[0])
        ):
            best = (start, end)
        start = end if end > start + 1 else start + 1
    return best


def _fit_regime_slope(h: Sequence[float], err: Sequence[float], regime: tuple[int, int]) -> float:
    """Slope over the regime, dropping points near the run minimum.

    The tail of a decreasing run dips into the noise floor where the FD
    formula's order no longer shows; points within _FIT_TRIM of the run
    minimum are excluded when enough clean points remain.
    """
    hs = list(h[regime[0]:regime[1]])
    es = list(err[regime[0]:regime[1]])
    floor = min(es) * _FIT_TRIM
    kept = [(hh, ee) for hh, ee in zip(hs, es) if ee >= floor]
    if len(kept) >= _MIN_REGIME_POINTS:
        hs = [k[0] for k in kept]
        es = [k[1] for k in kept]
    return _fit_slope(hs, es)


def _fit_slope(h: Sequence[float], err: Sequence[float]) -> float:
    """Ordinary least squares slope of log10(err) against log10(h)."""
    xs = [math.log10(v) for v in h]
    ys = [math.log10(e) for e in err]
    n = len(xs)
    mx = sum(xs) / n
    my = sum(ys) / n
    sxx = sum((v - mx) ** 2 for v in xs)
    sxy = sum((v - mx) * (w - my) for v, w in zip(xs, ys))
    return sxy / sxx


def _detect_plateau(h: Sequence[float], err: Sequence[float], regime: tuple[int, int]):
    """Flat error segment after the truncation regime stops decreasing.

    Works on the tail starting at the regime's last (smallest-error) point.
    A plateau is the longest leading window whose log-log slope is near 0;
    a roundoff-dominated tail has slope near -1 and is rejected. Returns
    (level, start_index) or None.
    """
    i0 = regime[1] - 1
    tail_h = h[i0:]
    tail_e = err[i0:]
    usable = [(hh, ee) for hh, ee in zip(tail_h, tail_e) if ee > 0.0]
    if len(usable) < _MIN_PLATEAU_POINTS:
        return None
    hs = [u[0] for u in usable]
    es = [u[1] for u in usable]
    for length in range(len(usable), _MIN_PLATEAU_POINTS - 1, -1):
        slope = _fit_slope(hs[:length], es[:length])
        if abs(slope) < _PLATEAU_SLOPE_BAND:
            window = sorted(es[:length])
            level = window[len(window) // 2]
            return level, i0
    return None


def gradcheck(
    program: Program,
    ad_directional: float,
    x: Sequence[float],
    direction: Sequence[float],
    h_grid: Sequence[float] | None = None,
) -> GradCheckReport:
    """Sweep step sizes and judge the claimed directional derivative.

    The forward-difference error should fall with order 1 and the central
    error with order 2 over the truncation regime; a flat central-error
    plateau well above the roundoff floor convicts the claimed derivative
    of an error of about the plateau's size.
    """
    hs = tuple(h_grid) if h_grid is not None else default_h_grid()
    if any(b >= a for a, b in zip(hs, hs[1:])):
        raise UsageError("h_grid must be strictly decreasing")
    base = core._as_output_tuple(program(list(x)))
    if len(base) != 1:
        raise UsageError("gradcheck requires a scalar-output program")
    f0 = float(base[0])

    fd1_error, fd2_error = [], []
    for h in hs:
        fd1_error.append(abs(fd_forward(program, x, direction, h) - ad_directional))
        fd2_error.append(abs(fd_central(program, x, direction, h) - ad_directional))

    regime1 = _longest_decreasing_run(fd1_error)
    regime2 = _longest_decreasing_run(fd2_error)
    slope1 = _fit_regime_slope(hs, fd1_error, regime1) if regime1 else None
    slope2 = _fit_regime_slope(hs, fd2_error, regime2) if regime2 else None

    notes = []
    plateau = None
    verdict = "pass"
    if regime2 is None:
        # No decreasing central-difference regime: either the errors sit at
        # the roundoff floor for every h (nothing to diagnose) or the sweep
        # cannot separate truncation from roundoff.
        scale = max(abs(f0), abs(ad_directional) * hs[0], 1e-300)
        if all(e * h <= _ROUNDOFF_CONSISTENT * _UNIT_ROUNDOFF * scale for h, e in zip(hs, fd2_error)):
            notes.append("no truncation regime: errors at roundoff floor for all h")
            verdict = "pass"
        else:
            notes.append("fewer than 4 usable points in the truncation regime")
            verdict = "inconclusive"
    else:
        found = _detect_plateau(hs, fd2_error, regime2)
        if found is not None:
            plateau, start = found
            h_start = hs[start]
            floor_est = (
                _ROUNDOFF_ACCUM * _UNIT_ROUNDOFF
                * max(abs(f0), abs(ad_directional) * h_start, 1e-300) / h_start
            )
            if plateau > _PLATEAU_FLOOR_FACTOR * floor_est:
                verdict = "suspect"
                notes.append(
                    f"central-difference error plateaus at {plateau:.3e} "
                    f"(~{plateau / max(floor_est, 1e-300):.0f}x the roundoff floor estimate)"
                )
            else:
                plateau = None  # indistinguishable from roundoff
        if slope2 is not None and slope2 < _SUSPECT_SLOPE2:
            verdict = "suspect"
            notes.append(f"central-difference convergence order {slope2:.2f} < {_SUSPECT_SLOPE2}")

    return GradCheckReport(
        h_grid=hs,
        fd1_error=tuple(fd1_error),
        fd2_error=tuple(fd2_error),
        slope1=slope1,
        slope2=slope2,
        plateau=plateau,
        verdict=verdict,
        notes=tuple(notes),
        regime1=regime1,
        regime2=regime2,
    )


# ---------------------------------------------------------------------------
# Staged programs and the dot-product test
# ---------------------------------------------------------------------------

@dataclass
class Stage:
    """One stage of a composition, with overridable JVP/VJP for fault injection."""

    name: str
    n_in: int
    n_out: int
    program: Program
    jvp: Callable | None = None
    vjp: Callable | None = None

    def primal(self, x: Sequence[float]) -> list[float]:
        out = core._as_output_tuple(self.program(list(x)))
        return [core.primal_value(v) for v in out]

    def run_jvp(self, x: Sequence[float], x_dot: Sequence[float]):
        if self.jvp is not None:
            return self.jvp(x, x_dot)
        return core.forward_jvp(self.program, x, x_dot)

    def run_vjp(self, x: Sequence[float], y_bar: Sequence[float]):
        if self.vjp is not None:
            return self.vjp(x, y_bar)
        return core.reverse_vjp(self.program, x, y_bar)


@dataclass
class StagedProgram:
    """A composition of stages with matching interface dimensions."""

    stages: list[Stage]

    def __post_init__(self):
        if not self.stages:
            raise UsageError("staged program needs at least one stage")
        for a, b in zip(self.stages, self.stages[1:]):
            if a.n_out != b.n_in:
                raise UsageError(
                    f"stage {a.name!r} outputs {a.n_out} values but {b.name!r} expects {b.n_in}"
                )

    @property
    def n_in(self) -> int:
        return self.stages[0].n_in

    @property
    def n_out(self) -> int:
        return self.stages[-1].n_out

    def as_program(self) -> Program:
        def composed(xs):
            current = list(xs)
            for stage in self.stages:
                current = list(core._as_output_tuple(stage.program(current)))
            return current

        return composed


@dataclass
class DotProductReport:
    """psi at every forward/reverse split point of a staged program."""

    psi_values: tuple[float, ...]
    max_rel_spread: float
    suspect_stage: int | None = None  # 1-based stage index, None when consistent
    stage_names: tuple[str, ...] = ()

    def rows(self) -> list[dict]:
        return [{"split": k, "psi": psi} for k, psi in enumerate(self.psi_values)]

    def text_summary(self) -> str:
        status = "PASS" if self.suspect_stage is None else "SUSPECT"
        detail = f"max_rel_spread={self.max_rel_spread:.3e}"
        if self.suspect_stage is not None:
            name = ""
            if self.stage_names:
                name = f" ({self.stage_names[self.suspect_stage - 1]!r})"
            detail += f", psi jumps at stage {self.suspect_stage}{name}"
        return f"CHECK dot_product: {status} — {detail}"


_DOT_SPREAD_TOL = 1e-9


def dot_product_test(
    staged: StagedProgram,
    x: Sequence[float],
    x_dot: Sequence[float],
    y_bar: Sequence[float],
) -> DotProductReport:
    """Compute psi at every split of the composition and compare.

    For split k the direction is pushed forward through stages 1..k and the
    weight pulled backward through stages n..k+1; the inner product at the
    interface is the same scalar for every k when all stages agree, and the
    first split where it changes names the inconsistent stage.
    """
    if len(x) != staged.n_in or len(x_dot) != staged.n_in:
        raise UsageError("x and x_dot must match the staged program input size")
    if len(y_bar) != staged.n_out:
        raise UsageError("y_bar must match the staged program output size")
    if not any(v != 0.0 for v in x_dot):
        raise UsageError("x_dot must be nonzero (the test is vacuous otherwise)")
    if not any(v != 0.0 for v in y_bar):
        raise UsageError("y_bar must be nonzero (the test is vacuous otherwise)")

    n = len(staged.stages)
    values: list[list[float]] = [list(x)]
    tangents: list[list[float]] = [list(x_dot)]
    for stage in staged.stages:
        y, y_dot = stage.run_jvp(values[-1], tangents[-1])
        values.append(list(y))
        tangents.append(list(y_dot))

    weights: list[list[float] | None] = [None] * (n + 1)
    weights[n] = list(y_bar)
    for i in range(n, 0, -1):
        _, x_bar = staged.stages[i - 1].run_vjp(values[i - 1], weights[i])
        weights[i - 1] = list(x_bar)

    psi = tuple(
        math.fsum(w * t for w, t in zip(weights[k], tangents[k])) for k in range(n + 1)
    )
    scale = max(abs(p) for p in psi)
    spread = (max(psi) - min(psi)) / scale if scale > 0.0 else 0.0

    suspect = None
    if spread > _DOT_SPREAD_TOL:
        jumps = [abs(psi[k + 1] - psi[k]) for k in range(n)]
        suspect = max(range(n), key=jumps.__getitem__) + 1

    return DotProductReport(
        psi_values=psi,
        max_rel_spread=spread,
        suspect_stage=suspect,
        stage_names=tuple(s.name for s in staged.stages),
    )


# ---------------------------------------------------------------------------
# FD-against-reverse check (forward mode replaced by finite differences)
# ---------------------------------------------------------------------------

_FD_VJP_CAVEAT = (
    "agreement only covers the projection onto the drawn x_dot/y_bar pair and "
    "only where finite differences resolve the implemented function; "
    "consistently wrong modes and staircase-flat regions pass unnoticed"
)


@dataclass
class FdVjpReport:
    verdict: str  # "pass" | "suspect"
    fd_value: float
    ad_value: float
    tolerance: float
    h: float
    seed: int
    x_dot: tuple[float, ...]
    caveat: str = _FD_VJP_CAVEAT

    def text_summary(self) -> str:
        return (
            f"CHECK fd_vjp: {self.verdict.upper()} — "
            f"|fd-ad|={abs(self.fd_value - self.ad_value):.3e} (tol {self.tolerance:.3e}, "
            f"fd={self.fd_value:.6e}, ad={self.ad_value:.6e}); note: {self.caveat}"
        )


def fd_vjp_check(
    program: Program | StagedProgram,
    x: Sequence[float],
    y_bar: Sequence[float],
    h: float = 1e-5,
    seed: int = 0,
) -> FdVjpReport:
    """Compare y_bar . (central FD in a random direction) with (VJP) . x_dot.

    The direction is drawn unit-norm from a seeded generator so reruns are
    reproducible. Catches reverse-mode errors that finite differences can
    resolve; the structural blind spots are spelled out in the report.
    """
    if isinstance(program, StagedProgram):
        program = program.as_program()
    if h <= 0.0:
        raise UsageError("finite-difference step h must be positive")
    rng = random.Random(seed)
    x_dot = [rng.gauss(0.0, 1.0) for _ in x]
    norm = math.sqrt(math.fsum(v * v for v in x_dot))
    if norm == 0.0:  # pragma: no cover - gauss never returns all zeros in practice
        x_dot = [1.0] + [0.0] * (len(x) - 1)
        norm = 1.0
    x_dot = [v / norm for v in x_dot]

    y, x_bar = core.reverse_vjp(program, x, y_bar)
    ad_value = math.fsum(b * d for b, d in zip(x_bar, x_dot))

    def weighted(xs):
        out = core._as_output_tuple(program(xs))
        total = 0.0
        for w, v in zip(y_bar, out):
            total = total + w * v
        return total

    fd_value = fd_central(weighted, x, x_dot, h)

    g_scale = 1.0 + abs(math.fsum(w * v for w, v in zip(y_bar, y)))
    tolerance = 10.0 * h * h * (1.0 + abs(ad_value)) + 100.0 * _UNIT_ROUNDOFF * g_scale / h
    verdict = "pass" if abs(fd_value - ad_value) <= tolerance else "suspect"
    return FdVjpReport(
        verdict=verdict,
        fd_value=fd_value,
        ad_value=ad_value,
        tolerance=tolerance,
        h=h,
        seed=seed,
        x_dot=tuple(x_dot),
    )
