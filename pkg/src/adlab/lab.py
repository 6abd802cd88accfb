"""Deterministic experiment runners that materialize AD failure modes as CSV.

Each runner sweeps a small configuration grid and emits one record per
sample holding the primal value, the AD derivative, a finite-difference
derivative, and (where available) an analytic reference, so the divergence
between "what AD differentiates" and "what the user meant" is visible row
by row. Runners use no randomness and fixed iteration orders: identical
configs produce byte-identical CSV files.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields
from typing import Callable, Sequence

from . import core
from .core import Dual
from .errors import DiagnosticError, UsageError
from .highlevel import (
    FixedPointProblem,
    SineTable,
    fixed_point_implicit,
    heron_loop,
    identity_fastpath,
    identity_fastpath_consistent,
    mul_fastpath,
    sin_poly,
    sin_lut,
    vec_max,
)

SCHEMAS: dict[str, tuple[str, ...]] = {
    "lorenz": ("rho", "T", "J", "ad_dJdrho", "fd_dJdrho"),
    "cosine": ("omega", "T", "L", "ad_dLdomega", "fd_dLdomega"),
    "quadrature": ("N", "x", "F", "ad_dFdx", "fd_dFdx", "flag"),
    "heron": ("a", "x0", "iters", "primal_err", "ad_loop_deriv_err", "implicit_deriv_err"),
    "pointwise": ("fn", "x", "primal", "ad_deriv", "ref_deriv", "fd_deriv", "rel_err_ad", "flag"),
}


@dataclass(frozen=True)
class ExperimentRecord:
    """One CSV row of an experiment, keyed by the experiment's schema."""

    experiment: str
    values: dict

    def row(self) -> list:
        return [self.values[column] for column in SCHEMAS[self.experiment]]


def _format_cell(value) -> str:
    # repr of a float is its shortest round-trip decimal form
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path, records: Sequence[ExperimentRecord]) -> None:
    """Write records (all from one experiment) with a header row."""
    if not records:
        raise UsageError("no records to write")
    experiment = records[0].experiment
    if any(r.experiment != experiment for r in records):
        raise UsageError("records from different experiments in one file")
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(SCHEMAS[experiment])
        for record in records:
            writer.writerow([_format_cell(v) for v in record.row()])


# ---------------------------------------------------------------------------
# Chaotic time average (Lorenz system)
# ---------------------------------------------------------------------------

@dataclass
class LorenzConfig:
    sigma: float = 10.0
    beta: float = 8.0 / 3.0
    rho_grid: tuple[float, ...] = (27.5, 28.0, 28.5)
    T_grid: tuple[float, ...] = (5.0, 10.0, 15.0, 20.0)
    dt: float = 0.01
    x0: float = 1.0
    y0: float = 1.0
    z0: float = 1.0

    def __post_init__(self):
        if self.dt <= 0.0:
            raise UsageError("dt must be positive")
        for T in self.T_grid:
            if T < 0.0 or abs(round(T / self.dt) * self.dt - T) > 1e-9:
                raise UsageError(f"horizon {T} is not a non-negative multiple of dt={self.dt}")


_LORENZ_FD_H = 0.1
_BLOWUP_LIMIT = 1e6


def _lorenz_mean_z(config: LorenzConfig, rho, checkpoints: dict[int, int]):
    """Integrate with classical RK4; returns {step: mean z over [0, step*dt]}.

    ``rho`` may be a float or a Dual, the state follows its type.
    """
    sigma, beta, dt = config.sigma, config.beta, config.dt
    state = (config.x0, config.y0, config.z0)

    def deriv(s):
        x, y, z = s
        return (sigma * (y - x), x * (rho - z) - y, x * y - beta * z)

    half = 0.5 * dt
    sixth = dt / 6.0
    z_sum = state[2]
    out = {}
    if 0 in checkpoints:
        out[0] = z_sum
    last = max(checkpoints)
    for step in range(1, last + 1):
        k1 = deriv(state)
        k2 = deriv(tuple(s + half * k for s, k in zip(state, k1)))
        k3 = deriv(tuple(s + half * k for s, k in zip(state, k2)))
        k4 = deriv(tuple(s + dt * k for s, k in zip(state, k3)))
        state = tuple(
            s + sixth * (a + 2.0 * b + 2.0 * c + d)
            for s, a, b, c, d in zip(state, k1, k2, k3, k4)
        )
        if any(abs(core.primal_value(s)) > _BLOWUP_LIMIT for s in state):
            raise DiagnosticError(f"lorenz state blew up at step {step} (|state| > {_BLOWUP_LIMIT:g})")
        z_sum = z_sum + state[2]
        if step in checkpoints:
            out[step] = z_sum * (1.0 / (step + 1))
    return out


def run_lorenz(config: LorenzConfig) -> list[ExperimentRecord]:
    """Time-averaged z of the Lorenz system: AD sensitivity to rho vs FD.

    One trajectory per rho serves every horizon in T_grid; the AD column is
    the exact derivative of the integrated branch, the FD column a central
    difference with step 0.1 in rho.
    """
    checkpoints = {int(round(T / config.dt)): T for T in config.T_grid}
    steps = sorted(checkpoints)
    records = []
    for rho in config.rho_grid:
        ad_runs = _lorenz_mean_z(config, Dual(rho, 1.0), dict.fromkeys(steps))
        hi = _lorenz_mean_z(config, rho + _LORENZ_FD_H, dict.fromkeys(steps))
        lo = _lorenz_mean_z(config, rho - _LORENZ_FD_H, dict.fromkeys(steps))
        for T in config.T_grid:
            step = int(round(T / config.dt))
            mean = ad_runs[step]
            J = mean.value if isinstance(mean, Dual) else mean
            dJ = mean.tangent if isinstance(mean, Dual) else 0.0
            fd = (hi[step] - lo[step]) / (2.0 * _LORENZ_FD_H)
            records.append(ExperimentRecord("lorenz", {
                "rho": rho, "T": T, "J": J, "ad_dJdrho": dJ, "fd_dJdrho": fd,
            }))
    return records


# ---------------------------------------------------------------------------
# Oscillating time average (exact antiderivative, no quadrature)
# ---------------------------------------------------------------------------

@dataclass
class CosineConfig:
    omega: float = 1.0
    T_grid: tuple[float, ...] = (100.0, 1000.0, 10000.0, 2.0 * math.pi * 1592)
    fd_h: float = 0.1

    def __post_init__(self):
        if self.omega <= 0.0:
            raise UsageError("omega must be positive")
        if self.fd_h <= 0.0:
            raise UsageError("fd_h must be positive")


def cosine_average(omega, T: float):
    """Time average of cos(omega t) over [0, T]: sin(omega T) / (omega T)."""
    if core.primal_value(omega) * T == 0.0:
        raise UsageError("omega * T must be nonzero (use the T = 0 limit record instead)")
    phase = omega * T
    return core.sin(phase) / phase


def run_cosine(config: CosineConfig) -> list[ExperimentRecord]:
    """The average decays like 1/T, but its omega-derivative keeps oscillating.

    AD reports the exact derivative cos(wT)/w - sin(wT)/(w^2 T), stuck in
    [-1, 1] forever; a central difference with a fixed step cannot resolve
    the oscillation and decays to zero instead.
    """
    records = []
    for T in config.T_grid:
        if T == 0.0:
            L, dL, fd = 1.0, 0.0, 0.0
        else:
            y, y_dot = core.forward_jvp(lambda xs: cosine_average(xs[0], T), [config.omega], [1.0])
            L, dL = y[0], y_dot[0]
            h = config.fd_h
            fd = (cosine_average(config.omega + h, T) - cosine_average(config.omega - h, T)) / (2.0 * h)
        records.append(ExperimentRecord("cosine", {
            "omega": config.omega, "T": T, "L": L, "ad_dLdomega": dL, "fd_dLdomega": fd,
        }))
    return records


# ---------------------------------------------------------------------------
# Midpoint-rule quadrature of a rectangular function (staircase)
# ---------------------------------------------------------------------------

@dataclass
class QuadratureConfig:
    rect_lo: float = 0.25
    rect_hi: float = 0.75
    N_grid: tuple[int, ...] = (10, 100, 1000)
    x_grid: tuple[float, ...] = (0.1, 0.3, 0.5, 0.7, 0.9)
    fd_h: float = 0.05

    def __post_init__(self):
        if not (0.0 <= self.rect_lo < self.rect_hi <= 1.0):
            raise UsageError("need 0 <= rect_lo < rect_hi <= 1")
        if self.fd_h <= 0.0:
            raise UsageError("fd_h must be positive")
        if any(n < 1 for n in self.N_grid):
            raise UsageError("sample counts must be positive")


def _staircase(x, n: int, rect_lo: float, rect_hi: float):
    """(1/N) sum of indicator(t_i < x) * rect(t_i) on the midpoint grid.

    Both the indicator and rect branch on comparisons, so the result is a
    plain constant under AD: piecewise constant in x with derivative 0
    almost everywhere.
    """
    count = 0
    for i in range(n):
        t = (i + 0.5) / n
        if t < x and rect_lo < t < rect_hi:
            count += 1
    return count / n


def run_quadrature(config: QuadratureConfig) -> list[ExperimentRecord]:
    records = []
    for n in config.N_grid:
        for x in config.x_grid:
            y, y_dot = core.forward_jvp(
                lambda xs: _staircase(xs[0], n, config.rect_lo, config.rect_hi), [x], [1.0]
            )
            h = config.fd_h
            fd = (
                _staircase(x + h, n, config.rect_lo, config.rect_hi)
                - _staircase(x - h, n, config.rect_lo, config.rect_hi)
            ) / (2.0 * h)
            nearest = min(max(round(x * n - 0.5), 0), n - 1)
            on_grid = abs(x - (nearest + 0.5) / n) < 1e-12
            records.append(ExperimentRecord("quadrature", {
                "N": n, "x": x, "F": y[0], "ad_dFdx": y_dot[0], "fd_dFdx": fd,
                "flag": "jump" if on_grid else "",
            }))
    return records


# ---------------------------------------------------------------------------
# Iterative square root: loop differentiation vs implicit fixed point
# ---------------------------------------------------------------------------

@dataclass
class HeronConfig:
    tol: float = 1e-6
    a_grid: tuple[float, ...] = (0.5, 1.0, 2.0, 4.0, 9.0)
    x0_grid: tuple[float, ...] = (0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 10.0)
    max_iters: int = 100

    def __post_init__(self):
        if self.tol <= 0.0:
            raise UsageError("tol must be positive")
        if any(a <= 0.0 for a in self.a_grid) or any(x <= 0.0 for x in self.x0_grid):
            raise UsageError("a_grid and x0_grid must be positive")


_IMPLICIT_TOL = 1e-10


def run_heron(config: HeronConfig) -> list[ExperimentRecord]:
    """Square-root iteration stopped on the primal: derivative lags behind.

    Per (a, x0): the loop's AD derivative error against 1/(2 sqrt a), the
    iteration count, and the error of the implicit fixed-point derivative,
    which has its own stopping criterion and ignores x0.
    """
    records = []
    for a in config.a_grid:
        truth = 0.5 / math.sqrt(a)
        for x0 in config.x0_grid:
            root = math.sqrt(a)
            dual_x, iters = heron_loop(Dual(a, 1.0), x0, config.tol, config.max_iters)
            x_val = core.primal_value(dual_x)
            d_loop = dual_x.tangent if isinstance(dual_x, Dual) else 0.0
            problem = FixedPointProblem(
                phi=lambda x, theta: (x + theta / x) * 0.5,
                x0=x0,
                tol_primal=_IMPLICIT_TOL,
                tol_deriv=_IMPLICIT_TOL,
                max_iters=config.max_iters,
            )
            _, d_implicit = fixed_point_implicit(problem, a)
            records.append(ExperimentRecord("heron", {
                "a": a, "x0": x0, "iters": iters,
                "primal_err": abs(x_val - root),
                "ad_loop_deriv_err": abs(d_loop - truth),
                "implicit_deriv_err": abs(d_implicit - truth),
            }))
    return records


# ---------------------------------------------------------------------------
# Pointwise single-input studies
# ---------------------------------------------------------------------------

_MUL_FIXED_FACTOR = 3.0
_TIE_PARTNER = 1.0
_LUT_RESOLUTION = 4096
_POLY_DEGREE = 7

_lut_table: SineTable | None = None


def _shared_table() -> SineTable:
    global _lut_table
    if _lut_table is None:
        _lut_table = SineTable(_LUT_RESOLUTION)
    return _lut_table


def _log_expm1_naive(x):
    """log(e^x - 1) with the cancellation-prone subtraction left in place."""
    return core.log(core.exp(x) - 1.0)


def _log_expm1_ref_deriv(x: float) -> float:
    # e^x / (e^x - 1) with the difference evaluated by the accurate expm1
    return math.exp(x) / math.expm1(x)


def _vec_max_ref_deriv(x: float) -> float:
    if x > _TIE_PARTNER:
        return 1.0
    if x == _TIE_PARTNER:
        return 0.5  # symmetric subgradient of the intended max
    return 0.0


_centi = [i / 100 for i in range(-200, 201)]

_POINTWISE_FUNCTIONS: dict[str, dict] = {
    "fastpath_g": {
        "f": lambda x: identity_fastpath(x),
        "ref": lambda x: 1.0,
        "grid": tuple(_centi),
    },
    "fastpath_h": {
        "f": lambda x: identity_fastpath_consistent(x),
        "ref": lambda x: 1.0,
        "grid": tuple(_centi),
    },
    "mul_fastpath": {
        "f": lambda x: mul_fastpath(_MUL_FIXED_FACTOR, x),
        "ref": lambda x: _MUL_FIXED_FACTOR,
        "grid": tuple(_centi),
    },
    "vec_max_tie": {
        "f": lambda x: vec_max([x, _TIE_PARTNER]),
        "ref": _vec_max_ref_deriv,
        "grid": tuple(_centi),
    },
    "sin_lut": {
        "f": lambda x: sin_lut(x, _shared_table()),
        "ref": math.cos,
        "grid": tuple(_centi),
    },
    "sin_poly": {
        "f": lambda x: sin_poly(x, _POLY_DEGREE),
        "ref": math.cos,
        "grid": tuple(i / 100 for i in range(-314, 315)),
    },
    "log_expm1": {
        "f": _log_expm1_naive,
        "ref": _log_expm1_ref_deriv,
        "grid": (-1.0, 0.0, 1e-12, 1e-10, 1e-8, 1e-6, 1e-4, 0.01, 0.1, 0.5, 1.0, 2.0, 5.0),
        "domain": lambda x: x > 0.0,
    },
}

POINTWISE_IDS = tuple(_POINTWISE_FUNCTIONS)

_MISMATCH_RTOL = 1e-6


@dataclass
class PointwiseConfig:
    functions: tuple[str, ...] = POINTWISE_IDS
    x_grid: tuple[float, ...] | None = None
    fd_h: float = 1e-5

    def __post_init__(self):
        unknown = [fn for fn in self.functions if fn not in _POINTWISE_FUNCTIONS]
        if unknown:
            raise UsageError(f"unknown pointwise function ids: {unknown}")
        if self.fd_h <= 0.0:
            raise UsageError("fd_h must be positive")


def run_pointwise_study(
    function_id: str,
    x_grid: Sequence[float] | None = None,
    fd_h: float = 1e-5,
) -> list[ExperimentRecord]:
    """Primal, AD derivative, intended-function derivative, and FD, per x.

    The reference column is the analytic derivative of the function the
    code is *meant* to compute; rows where AD disagrees with it beyond
    about six digits are flagged, as are domain violations.
    """
    spec = _POINTWISE_FUNCTIONS.get(function_id)
    if spec is None:
        raise UsageError(f"unknown pointwise function id {function_id!r}")
    grid = tuple(x_grid) if x_grid is not None else spec["grid"]
    in_domain: Callable[[float], bool] = spec.get("domain", lambda x: True)
    f = spec["f"]
    records = []
    for x in grid:
        if not in_domain(x):
            records.append(ExperimentRecord("pointwise", {
                "fn": function_id, "x": x, "primal": math.nan, "ad_deriv": math.nan,
                "ref_deriv": math.nan, "fd_deriv": math.nan, "rel_err_ad": math.nan,
                "flag": "domain",
            }))
            continue
        y, y_dot = core.forward_jvp(lambda xs: f(xs[0]), [x], [1.0])
        ref = spec["ref"](x)
        # shrink the step near the domain edge so both FD samples stay valid
        h = fd_h
        if not in_domain(x - h) or not in_domain(x + h):
            h = abs(x) / 2.0
        fd = (core.primal_value(f(x + h)) - core.primal_value(f(x - h))) / (2.0 * h)
        rel = abs(y_dot[0] - ref) / max(abs(ref), 1e-15)
        records.append(ExperimentRecord("pointwise", {
            "fn": function_id, "x": x, "primal": y[0], "ad_deriv": y_dot[0],
            "ref_deriv": ref, "fd_deriv": fd, "rel_err_ad": rel,
            "flag": "mismatch" if rel > _MISMATCH_RTOL else "",
        }))
    return records


def run_pointwise(config: PointwiseConfig) -> list[ExperimentRecord]:
    records = []
    for fn in config.functions:
        records.extend(run_pointwise_study(fn, config.x_grid, config.fd_h))
    return records


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------

EXPERIMENTS: dict[str, tuple[type, Callable]] = {
    "lorenz": (LorenzConfig, run_lorenz),
    "cosine": (CosineConfig, run_cosine),
    "quadrature": (QuadratureConfig, run_quadrature),
    "heron": (HeronConfig, run_heron),
    "pointwise": (PointwiseConfig, run_pointwise),
}

ALIASES = {"cosine_average": "cosine", "pointwise_study": "pointwise"}


def resolve_experiment(name: str) -> str:
    canonical = ALIASES.get(name, name)
    if canonical not in EXPERIMENTS:
        raise UsageError(f"unknown experiment {name!r}; known: {', '.join(EXPERIMENTS)}")
    return canonical


def config_from_overrides(experiment: str, overrides: dict[str, str]):
    """Build an experiment config from flat key=value strings.

    Unknown keys and unparsable values are errors: an experiment never
    partially runs with a silently dropped setting.
    """
    cls, _ = EXPERIMENTS[resolve_experiment(experiment)]
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, raw in overrides.items():
        if key not in known:
            raise UsageError(f"unknown config key {key!r} for {experiment}; known: {', '.join(known)}")
        kwargs[key] = _parse_override(known[key], raw)
    return cls(**kwargs)


def _parse_override(field_obj, raw: str):
    hint = str(field_obj.type)
    try:
        if "tuple[str" in hint:
            return tuple(part.strip() for part in raw.split(",") if part.strip())
        if "tuple[int" in hint:
            return tuple(int(part) for part in raw.split(","))
        if "tuple[float" in hint:
            return tuple(float(part) for part in raw.split(","))
        if "int" in hint and "float" not in hint:
            return int(raw)
        if "float" in hint:
            return float(raw)
    except ValueError as exc:
        raise UsageError(f"cannot parse {raw!r} for config key {field_obj.name!r}: {exc}") from None
    raise UsageError(f"config key {field_obj.name!r} cannot be set from the command line")
