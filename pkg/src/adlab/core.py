"""Scalar forward-mode (dual number) and reverse-mode (tape) automatic differentiation.

Both modes differentiate the composition of elementary operations actually
executed on one branch of a program: comparisons are evaluated on primal
values and return plain bools, so `if`/`while` statements pick a branch and
derivatives flow through that branch only.

A program is any callable taking a list of scalar-like values (float, Dual,
or TapeVar) and returning a scalar-like or a sequence of them. The same
callable serves primal evaluation, forward JVPs, and reverse VJPs.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence, Union

from .errors import DiagnosticError, DomainWarning, UsageError

Number = Union[int, float]

_MAX_REVERSE_NODES = 50_000_000  # sanity bound, not a tuning knob


def _domain_nan(op: str, *values: float) -> float:
    args = ", ".join(repr(v) for v in values)
    warnings.warn(f"{op}({args}) outside real domain; propagating NaN", DomainWarning, stacklevel=4)
    return math.nan


# ---------------------------------------------------------------------------
# Elementary operation registry
# ---------------------------------------------------------------------------

def _pow_value(x: float, p: float) -> float:
    if x < 0.0 and p != round(p):
        return _domain_nan("pow", x, p)
    try:
        return math.pow(x, p)
    except (ValueError, OverflowError):
        return _domain_nan("pow", x, p)


def _pow_partial(x: float, p: float) -> float:
    # At x == 0 the power rule p*x**(p-1) only stays finite for p > 1.
    if x == 0.0:
        if p > 1.0:
            return 0.0
        return _domain_nan("pow'", x, p)
    if x < 0.0 and p != round(p):
        return math.nan  # value already NaN-flagged
    return p * math.pow(x, p - 1.0)


def _div_value(a: float, b: float) -> float:
    if b == 0.0:
        return _domain_nan("div", a, b)
    return a / b


def _log_value(x: float) -> float:
    if x <= 0.0:
        return _domain_nan("log", x)
    return math.log(x)


def _sqrt_value(x: float) -> float:
    if x < 0.0:
        return _domain_nan("sqrt", x)
    return math.sqrt(x)


def _sqrt_partial(x: float) -> float:
    if x <= 0.0:
        # one-sided limit is +inf at 0; NaN-flag it like pow with p < 1
        return _domain_nan("sqrt'", x)
    return 0.5 / math.sqrt(x)


def _exp_value(x: float) -> float:
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


@dataclass(frozen=True)
class ElementaryOp:
    """One member of the elementary set: primal rule plus local partials.

    ``partials`` receives the operand values followed by the already-computed
    result value and returns one partial per operand. Ties and
    non-differentiable points follow the documented conventions: abs at 0 has
    derivative 0, equal min/max operands assign the derivative to the first.
    """

    name: str
    arity: int
    value: Callable[..., float]
    partials: Callable[..., tuple]
    needs_param: bool = False


OPS: dict[str, ElementaryOp] = {}


def _register(name, arity, value, partials, needs_param=False):
    OPS[name] = ElementaryOp(name, arity, value, partials, needs_param)


_register("add", 2, lambda a, b: a + b, lambda a, b, v: (1.0, 1.0))
_register("sub", 2, lambda a, b: a - b, lambda a, b, v: (1.0, -1.0))
_register("mul", 2, lambda a, b: a * b, lambda a, b, v: (b, a))
_register("div", 2, _div_value, lambda a, b, v: (math.nan, math.nan) if b == 0.0 else (1.0 / b, -a / (b * b)))
_register("neg", 1, lambda a: -a, lambda a, v: (-1.0,))
_register("sin", 1, math.sin, lambda a, v: (math.cos(a),))
_register("cos", 1, math.cos, lambda a, v: (-math.sin(a),))
_register("exp", 1, _exp_value, lambda a, v: (v,))
_register("log", 1, _log_value, lambda a, v: (1.0 / a,) if a > 0.0 else (math.nan,))
_register("sqrt", 1, _sqrt_value, lambda a, v: (_sqrt_partial(a),))
_register("abs", 1, abs, lambda a, v: ((1.0 if a > 0.0 else -1.0 if a < 0.0 else 0.0),))
_register("min", 2, lambda a, b: a if a <= b else b, lambda a, b, v: (1.0, 0.0) if a <= b else (0.0, 1.0))
_register("max", 2, lambda a, b: a if a >= b else b, lambda a, b, v: (1.0, 0.0) if a >= b else (0.0, 1.0))
_register("pow", 1, _pow_value, lambda a, v, p: (_pow_partial(a, p),), needs_param=True)


# ---------------------------------------------------------------------------
# Forward mode
# ---------------------------------------------------------------------------

class Dual:
    """Value/tangent pair carrying a directional derivative through a program.

    Lifting a plain number yields tangent exactly 0.0, and arithmetic among
    zero-tangent duals keeps the tangent exactly 0.0 (constants stay
    constant, bit for bit).
    """

    __slots__ = ("value", "tangent")

    def __init__(self, value: Number, tangent: Number = 0.0):
        self.value = float(value)
        self.tangent = float(tangent)

    def __repr__(self) -> str:
        return f"Dual({self.value!r}, {self.tangent!r})"

    # comparisons look at primal values only; they steer branches and are
    # deliberately tangent-free
    def __eq__(self, other):
        return self.value == _primal(other)

    def __ne__(self, other):
        return self.value != _primal(other)

    def __lt__(self, other):
        return self.value < _primal(other)

    def __le__(self, other):
        return self.value <= _primal(other)

    def __gt__(self, other):
        return self.value > _primal(other)

    def __ge__(self, other):
        return self.value >= _primal(other)

    __hash__ = None  # type: ignore[assignment]

    def __add__(self, other):
        return apply_elementary("add", self, other)

    def __radd__(self, other):
        return apply_elementary("add", other, self)

    def __sub__(self, other):
        return apply_elementary("sub", self, other)

    def __rsub__(self, other):
        return apply_elementary("sub", other, self)

    def __mul__(self, other):
        return apply_elementary("mul", self, other)

    def __rmul__(self, other):
        return apply_elementary("mul", other, self)

    def __truediv__(self, other):
        return apply_elementary("div", self, other)

    def __rtruediv__(self, other):
        return apply_elementary("div", other, self)

    def __neg__(self):
        return apply_elementary("neg", self)

    def __pos__(self):
        return self

    def __abs__(self):
        return apply_elementary("abs", self)

    def __pow__(self, p):
        if not isinstance(p, (int, float)):
            raise UsageError("pow exponent must be a plain real number")
        return apply_elementary("pow", self, param=float(p))


# ---------------------------------------------------------------------------
# Reverse mode
# ---------------------------------------------------------------------------

class TapeNode:
    """One recorded elementary operation: kind, parents, partials, value.

    ``param`` holds the real exponent for pow nodes so the primal can be
    replayed bit-exactly from the recorded structure alone.
    """

    __slots__ = ("op_kind", "parent_ids", "local_partials", "value", "param")

    def __init__(self, op_kind, parent_ids, local_partials, value, param=None):
        self.op_kind = op_kind
        self.parent_ids = parent_ids
        self.local_partials = local_partials
        self.value = value
        self.param = param

    def __repr__(self) -> str:
        return f"TapeNode({self.op_kind}, parents={self.parent_ids}, value={self.value!r})"


class Tape:
    """Append-only record of the operations executed on one program branch.

    Node ids are dense indices in recording order; parents always precede
    children, so a single reverse pass over the node list propagates
    adjoints. Values are stored eagerly, which makes bit-exact primal replay
    a pure table walk.
    """

    def __init__(self):
        self.nodes: list[TapeNode] = []
        self.input_ids: list[int] = []
        self.output_ids: list[int] = []

    def _append(self, node: TapeNode) -> "TapeVar":
        if len(self.nodes) >= _MAX_REVERSE_NODES:
            raise DiagnosticError("tape exceeded the node sanity bound")
        self.nodes.append(node)
        return TapeVar(self, len(self.nodes) - 1, node.value)

    def input(self, value: Number) -> "TapeVar":
        var = self._append(TapeNode("input", (), (), float(value)))
        self.input_ids.append(var.node_id)
        return var

    def constant(self, value: Number) -> "TapeVar":
        return self._append(TapeNode("const", (), (), float(value)))

    def record(self, op: ElementaryOp, parent_ids, partials, value, param=None) -> "TapeVar":
        return self._append(TapeNode(op.name, parent_ids, partials, value, param))

    def mark_outputs(self, variables: Sequence["TapeVar"]) -> None:
        for var in variables:
            if var.tape is not self:
                raise UsageError("output variable belongs to a different tape")
            self.output_ids.append(var.node_id)

    def replay(self) -> list[float]:
        """Re-evaluate the recorded branch; returns the output values.

        Used to check that the tape reproduces the original evaluation
        bit-exactly (same ops, same operand order).
        """
        values: list[float] = []
        for node in self.nodes:
            if node.op_kind in ("input", "const"):
                values.append(node.value)
            elif node.param is not None:
                values.append(OPS[node.op_kind].value(*(values[p] for p in node.parent_ids), node.param))
            else:
                values.append(OPS[node.op_kind].value(*(values[p] for p in node.parent_ids)))
        return [values[i] for i in self.output_ids]

    def adjoints(self, output_seeds: Sequence[float]) -> list[float]:
        """Reverse sweep: seed the outputs, return one adjoint per node.

        All accumulators start at exactly 0.0; zero adjoints are not
        propagated, so a zero seed yields exactly-zero input adjoints.
        """
        if len(output_seeds) != len(self.output_ids):
            raise UsageError(
                f"expected {len(self.output_ids)} output seeds, got {len(output_seeds)}"
            )
        adj = [0.0] * len(self.nodes)
        for node_id, seed in zip(self.output_ids, output_seeds):
            adj[node_id] += float(seed)
        for node_id in range(len(self.nodes) - 1, -1, -1):
            a = adj[node_id]
            if a == 0.0:
                continue
            node = self.nodes[node_id]
            for parent, partial in zip(node.parent_ids, node.local_partials):
                adj[parent] += a * partial
        return adj


class TapeVar:
    """Handle to one tape node; behaves like a scalar in arithmetic."""

    __slots__ = ("tape", "node_id", "value")

    def __init__(self, tape: Tape, node_id: int, value: float):
        self.tape = tape
        self.node_id = node_id
        self.value = value

    def __repr__(self) -> str:
        return f"TapeVar(id={self.node_id}, value={self.value!r})"

    def __eq__(self, other):
        return self.value == _primal(other)

    def __ne__(self, other):
        return self.value != _primal(other)

    def __lt__(self, other):
        return self.value < _primal(other)

    def __le__(self, other):
        return self.value <= _primal(other)

    def __gt__(self, other):
        return self.value > _primal(other)

    def __ge__(self, other):
        return self.value >= _primal(other)

    __hash__ = None  # type: ignore[assignment]

    def __add__(self, other):
        return apply_elementary("add", self, other)

    def __radd__(self, other):
        return apply_elementary("add", other, self)

    def __sub__(self, other):
        return apply_elementary("sub", self, other)

    def __rsub__(self, other):
        return apply_elementary("sub", other, self)

    def __mul__(self, other):
        return apply_elementary("mul", self, other)

    def __rmul__(self, other):
        return apply_elementary("mul", other, self)

    def __truediv__(self, other):
        return apply_elementary("div", self, other)

    def __rtruediv__(self, other):
        return apply_elementary("div", other, self)

    def __neg__(self):
        return apply_elementary("neg", self)

    def __pos__(self):
        return self

    def __abs__(self):
        return apply_elementary("abs", self)

    def __pow__(self, p):
        if not isinstance(p, (int, float)):
            raise UsageError("pow exponent must be a plain real number")
        return apply_elementary("pow", self, param=float(p))


Scalar = Union[float, int, Dual, TapeVar]


def _primal(x) -> float:
    if isinstance(x, (Dual, TapeVar)):
        return x.value
    return float(x)


def primal_value(x: Scalar) -> float:
    """Primal value of a scalar-like, for branch logic outside the op set."""
    return _primal(x)


# ---------------------------------------------------------------------------
# Generic dispatch
# ---------------------------------------------------------------------------

def apply_elementary(op_name: str, *operands, param: float | None = None):
    """Apply one elementary operation to floats, Duals, or TapeVars.

    The operand types pick the mode: plain numbers evaluate the primal rule,
    any Dual propagates a tangent, any TapeVar records a node. Mixing Duals
    and TapeVars in one call is an error.
    """
    op = OPS.get(op_name)
    if op is None:
        raise UsageError(f"unknown elementary operation {op_name!r}")
    if len(operands) != op.arity:
        raise UsageError(f"{op_name} expects {op.arity} operands, got {len(operands)}")
    if op.needs_param != (param is not None):
        raise UsageError(f"{op_name} parameter mismatch")

    tape = None
    has_dual = False
    for x in operands:
        if isinstance(x, TapeVar):
            if tape is None:
                tape = x.tape
            elif tape is not x.tape:
                raise UsageError("operands recorded on different tapes")
        elif isinstance(x, Dual):
            has_dual = True
    if tape is not None and has_dual:
        raise UsageError("cannot mix Dual and TapeVar operands")

    values = tuple(_primal(x) for x in operands)
    if param is None:
        result = op.value(*values)
        partials_args = values + (result,)
    else:
        result = op.value(*values, param)
        partials_args = values + (result, param)

    if tape is not None:
        partials = op.partials(*partials_args)
        parent_ids = tuple(
            x.node_id if isinstance(x, TapeVar) else tape.constant(v).node_id
            for x, v in zip(operands, values)
        )
        return tape.record(op, parent_ids, partials, result, param)

    if has_dual:
        tangent = 0.0
        if any(isinstance(x, Dual) and x.tangent != 0.0 for x in operands):
            partials = op.partials(*partials_args)
            for x, partial in zip(operands, partials):
                if isinstance(x, Dual) and x.tangent != 0.0:
                    tangent += partial * x.tangent
        return Dual(result, tangent)

    return result


def sin(x: Scalar):
    return apply_elementary("sin", x)


def cos(x: Scalar):
    return apply_elementary("cos", x)


def exp(x: Scalar):
    return apply_elementary("exp", x)


def log(x: Scalar):
    return apply_elementary("log", x)


def sqrt(x: Scalar):
    return apply_elementary("sqrt", x)


def minimum(a: Scalar, b: Scalar):
    """Elementary min; on a tie the derivative goes to the first operand."""
    return apply_elementary("min", a, b)


def maximum(a: Scalar, b: Scalar):
    """Elementary max; on a tie the derivative goes to the first operand."""
    return apply_elementary("max", a, b)


# ---------------------------------------------------------------------------
# Whole-program drivers
# ---------------------------------------------------------------------------

Program = Callable[[Sequence[Scalar]], Union[Scalar, Sequence[Scalar]]]


def _as_output_tuple(result) -> tuple:
    if isinstance(result, (list, tuple)):
        return tuple(result)
    return (result,)


def forward_jvp(program: Program, x: Sequence[float], x_dot: Sequence[float]):
    """Evaluate the program and push the direction ``x_dot`` through it.

    Returns ``(y, y_dot)`` as lists: the primal outputs and the exact
    directional derivative of the executed branch.
    """
    if len(x) != len(x_dot):
        raise UsageError(f"x has length {len(x)} but x_dot has length {len(x_dot)}")
    inputs = [Dual(v, t) for v, t in zip(x, x_dot)]
    outputs = _as_output_tuple(program(inputs))
    y, y_dot = [], []
    for out in outputs:
        if isinstance(out, TapeVar):
            raise UsageError("program produced a TapeVar under forward mode")
        if isinstance(out, Dual):
            y.append(out.value)
            y_dot.append(out.tangent)
        else:
            y.append(float(out))
            y_dot.append(0.0)
    return y, y_dot


def reverse_vjp(program: Program, x: Sequence[float], y_bar: Sequence[float]):
    """Record the program on a tape, then sweep adjoints in reverse.

    Returns ``(y, x_bar)``: the primal outputs and the ``y_bar``-weighted
    gradient of the executed branch.
    """
    tape = Tape()
    inputs = [tape.input(v) for v in x]
    outputs = _as_output_tuple(program(inputs))
    out_vars = []
    for out in outputs:
        if isinstance(out, Dual):
            raise UsageError("program produced a Dual under reverse mode")
        out_vars.append(out if isinstance(out, TapeVar) else tape.constant(out))
    if len(y_bar) != len(out_vars):
        raise UsageError(f"program has {len(out_vars)} outputs but y_bar has length {len(y_bar)}")
    tape.mark_outputs(out_vars)
    adj = tape.adjoints(list(y_bar))
    y = [v.value for v in out_vars]
    x_bar = [adj[i] for i in tape.input_ids]
    return y, x_bar


def gradient(program: Program, x: Sequence[float]) -> list[float]:
    """Gradient of a scalar-output program (reverse mode seeded with 1)."""
    tape = Tape()
    inputs = [tape.input(v) for v in x]
    outputs = _as_output_tuple(program(inputs))
    if len(outputs) != 1:
        raise UsageError(f"gradient requires a scalar-output program, got {len(outputs)} outputs")
    out = outputs[0]
    if isinstance(out, Dual):
        raise UsageError("program produced a Dual under reverse mode")
    out_var = out if isinstance(out, TapeVar) else tape.constant(out)
    tape.mark_outputs([out_var])
    adj = tape.adjoints([1.0])
    return [adj[i] for i in tape.input_ids]
