"""Scalar computation-graph engine with a forward tangent rail.

Every recorded node carries a (primal, tangent) pair; the tangent is the
directional derivative of the node along whatever direction the inputs were
seeded with.  A single reverse sweep over the same tape differentiates any
weighted combination of primal and tangent outputs with respect to the
registered parameter slots.  Seeding the tangent rail with a spatial
direction and the reverse sweep with the tangent output therefore yields
exact parameter gradients of directional-derivative expressions
(forward-over-reverse).

The engine is scalar and sequential by design: it is the reference that the
vectorised network kernels are checked against, and the reverse sweep
visits nodes in a fixed order so gradients are bit-for-bit reproducible.
All arithmetic is double precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, EvaluationError

_CONST = 0
_INPUT = 1
_PARAM = 2
_ADD = 3
_SUB = 4
_MUL = 5
_DIV = 6
_NEG = 7
_POW = 8
_TANH = 9
_EXP = 10
_SIN = 11
_COS = 12
_AFFINE = 13  # contraction sum_i w_i * x_i + b


@dataclass(frozen=True)
class DualScalar:
    """A primal value paired with its directional derivative."""

    primal: float
    tangent: float = 0.0


class Var:
    """Handle to one tape node; supports the recorded primitive set."""

    __slots__ = ("tape", "i")

    def __init__(self, tape, i):
        self.tape = tape
        self.i = i

    @property
    def primal(self):
        return self.tape.val[self.i]

    @property
    def tangent(self):
        return self.tape.tan[self.i]

    @property
    def dual(self):
        return DualScalar(self.primal, self.tangent)

    def _lift(self, other):
        if isinstance(other, Var):
            if other.tape is not self.tape:
                raise ContractViolation("operands live on different tapes")
            return other
        return self.tape.constant(float(other))

    def __add__(self, other):
        o = self._lift(other)
        return self.tape._binary(_ADD, self.i, o.i)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._lift(other)
        return self.tape._binary(_SUB, self.i, o.i)

    def __rsub__(self, other):
        return self._lift(other).__sub__(self)

    def __mul__(self, other):
        o = self._lift(other)
        return self.tape._binary(_MUL, self.i, o.i)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._lift(other)
        return self.tape._binary(_DIV, self.i, o.i)

    def __rtruediv__(self, other):
        return self._lift(other).__truediv__(self)

    def __neg__(self):
        return self.tape._unary(_NEG, self.i)

    def __pow__(self, exponent):
        if isinstance(exponent, Var):
            raise ContractViolation("only constant exponents are supported")
        return self.tape._unary(_POW, self.i, aux=float(exponent))

    def tanh(self):
        return self.tape._unary(_TANH, self.i)

    def exp(self):
        return self.tape._unary(_EXP, self.i)

    def sin(self):
        return self.tape._unary(_SIN, self.i)

    def cos(self):
        return self.tape._unary(_COS, self.i)


class Tape:
    """Append-only record of a scalar program with primal/tangent values.

    Nodes are topologically ordered by construction (an operation can only
    reference handles that already exist).  ``param`` registers a node in
    the parameter-slot map so reverse sweeps can produce a flat gradient.
    """

    def __init__(self):
        self.ops = []  # (kind, args, aux)
        self.val = []
        self.tan = []
        self.param_slots = {}  # slot -> node index
        self.input_nodes = []  # node indices in declaration order
        self.output = None

    def __len__(self):
        return len(self.ops)

    # -- leaves ----------------------------------------------------------

    def constant(self, value):
        return self._push(_CONST, (), None, float(value), 0.0)

    def input(self, value, tangent=0.0):
        var = self._push(_INPUT, (), None, float(value), float(tangent))
        self.input_nodes.append(var.i)
        return var

    def param(self, slot, value):
        slot = int(slot)
        if slot < 0:
            raise ContractViolation("parameter slot must be nonnegative")
        if slot in self.param_slots:
            raise ContractViolation(f"parameter slot {slot} already registered")
        var = self._push(_PARAM, (), slot, float(value), 0.0)
        self.param_slots[slot] = var.i
        return var

    # -- recording -------------------------------------------------------

    def _push(self, kind, args, aux, v, t):
        i = len(self.ops)
        if not (math.isfinite(v) and math.isfinite(t)):
            raise EvaluationError(f"non-finite value at node {i} (op kind {kind})")
        self.ops.append((kind, args, aux))
        self.val.append(v)
        self.tan.append(t)
        return Var(self, i)

    def _unary(self, kind, i, aux=None):
        v, t = self._eval_node(kind, (i,), aux, self.val, self.tan, len(self.ops))
        return self._push(kind, (i,), aux, v, t)

    def _binary(self, kind, i, j):
        v, t = self._eval_node(kind, (i, j), None, self.val, self.tan, len(self.ops))
        return self._push(kind, (i, j), None, v, t)

    def affine(self, weights, xs, bias):
        """Contraction sum_k w_k * x_k + b in a single node."""
        if len(weights) != len(xs):
            raise ContractViolation("affine contraction needs matching w/x lists")
        args = (tuple(v.i for v in weights), tuple(v.i for v in xs), bias.i)
        v, t = self._eval_node(_AFFINE, args, None, self.val, self.tan, len(self.ops))
        return self._push(_AFFINE, args, None, v, t)

    # -- evaluation ------------------------------------------------------

    def _eval_node(self, kind, args, aux, val, tan, node_index):
        if kind == _ADD:
            a, b = args
            return val[a] + val[b], tan[a] + tan[b]
        if kind == _SUB:
            a, b = args
            return val[a] - val[b], tan[a] - tan[b]
        if kind == _MUL:
            a, b = args
            return val[a] * val[b], tan[a] * val[b] + val[a] * tan[b]
        if kind == _DIV:
            a, b = args
            if val[b] == 0.0:
                raise EvaluationError(f"division by zero at node {node_index}")
            inv = 1.0 / val[b]
            return val[a] * inv, (tan[a] - val[a] * inv * tan[b]) * inv
        if kind == _NEG:
            (a,) = args
            return -val[a], -tan[a]
        if kind == _POW:
            (a,) = args
            x = val[a]
            n = aux
            if x < 0.0 and n != int(n):
                raise EvaluationError(
                    f"fractional power of negative base at node {node_index}"
                )
            if x == 0.0 and n < 1.0:
                raise EvaluationError(f"power domain violation at node {node_index}")
            v = x**n
            return v, n * x ** (n - 1.0) * tan[a] if n != 0.0 else 0.0
        if kind == _TANH:
            (a,) = args
            v = math.tanh(val[a])
            return v, (1.0 - v * v) * tan[a]
        if kind == _EXP:
            (a,) = args
            v = math.exp(val[a])
            return v, v * tan[a]
        if kind == _SIN:
            (a,) = args
            return math.sin(val[a]), math.cos(val[a]) * tan[a]
        if kind == _COS:
            (a,) = args
            return math.cos(val[a]), -math.sin(val[a]) * tan[a]
        if kind == _AFFINE:
            widx, xidx, bidx = args
            v = val[bidx]
            t = tan[bidx]
            for w, x in zip(widx, xidx):
                v += val[w] * val[x]
                t += tan[w] * val[x] + val[w] * tan[x]
            return v, t
        raise EvaluationError(f"unknown op kind {kind} at node {node_index}")

    def replay(self, inputs=None, input_tangents=None, params=None):
        """Recompute every node with optionally overridden leaf values.

        Leaves keep their recorded values where no override is given.
        Identical overrides reproduce the recorded values bit for bit.
        """
        val, tan = self.val, self.tan
        for i, (kind, args, aux) in enumerate(self.ops):
            if kind == _INPUT:
                pos = self.input_nodes.index(i)
                if inputs is not None:
                    val[i] = float(inputs[pos])
                if input_tangents is not None:
                    tan[i] = float(input_tangents[pos])
            elif kind == _PARAM:
                if params is not None:
                    val[i] = float(params[aux])
            elif kind != _CONST:
                val[i], tan[i] = self._eval_node(kind, args, aux, val, tan, i)
        return self


def record_forward(tape, inputs, input_tangents, program):
    """Run ``program`` on seeded inputs, recording every node on ``tape``.

    ``program(tape, vars) -> Var`` may only use the supported primitives.
    Returns the output Var; its ``.primal`` is the program value and its
    ``.tangent`` the directional derivative along the seed direction.
    """
    if len(inputs) != len(input_tangents):
        raise ContractViolation("inputs and input_tangents must have equal length")
    in_vars = [tape.input(v, t) for v, t in zip(inputs, input_tangents)]
    out = program(tape, in_vars)
    if not isinstance(out, Var) or out.tape is not tape:
        raise ContractViolation("program must return a Var recorded on the tape")
    tape.output = out.i
    return out


def reverse_gradient(tape, value_adjoints=None, tangent_adjoints=None):
    """Reverse sweep: d(seeded outputs)/d(params) for every parameter slot.

    ``value_adjoints`` seeds primal outputs, ``tangent_adjoints`` seeds
    tangent outputs (maps node index -> weight).  Seeding both gives the
    gradient of the corresponding weighted combination.  Unvisited
    parameter slots get 0.  The sweep order is fixed, so the reduction is
    deterministic.
    """
    n = len(tape.ops)
    vbar = [0.0] * n
    tbar = [0.0] * n
    for seeds, acc in ((value_adjoints, vbar), (tangent_adjoints, tbar)):
        if seeds is None:
            continue
        for node, w in seeds.items():
            if not (0 <= node < n):
                raise ContractViolation(f"adjoint seed on nonexistent node {node}")
            acc[node] += float(w)

    val, tan = tape.val, tape.tan
    for i in range(n - 1, -1, -1):
        zv = vbar[i]
        zt = tbar[i]
        if zv == 0.0 and zt == 0.0:
            continue
        kind, args, aux = tape.ops[i]
        if kind in (_CONST, _INPUT, _PARAM):
            continue
        if kind == _ADD:
            a, b = args
            vbar[a] += zv
            tbar[a] += zt
            vbar[b] += zv
            tbar[b] += zt
        elif kind == _SUB:
            a, b = args
            vbar[a] += zv
            tbar[a] += zt
            vbar[b] -= zv
            tbar[b] -= zt
        elif kind == _MUL:
            a, b = args
            vbar[a] += zv * val[b] + zt * tan[b]
            tbar[a] += zt * val[b]
            vbar[b] += zv * val[a] + zt * tan[a]
            tbar[b] += zt * val[a]
        elif kind == _DIV:
            a, b = args
            inv = 1.0 / val[b]
            inv2 = inv * inv
            vbar[a] += zv * inv - zt * tan[b] * inv2
            tbar[a] += zt * inv
            vbar[b] += (
                -zv * val[a] * inv2
                + zt * (-tan[a] * inv2 + 2.0 * val[a] * tan[b] * inv2 * inv)
            )
            tbar[b] += -zt * val[a] * inv2
        elif kind == _NEG:
            (a,) = args
            vbar[a] -= zv
            tbar[a] -= zt
        elif kind == _POW:
            (a,) = args
            x = val[a]
            d1 = aux * x ** (aux - 1.0) if aux != 0.0 else 0.0
            d2 = aux * (aux - 1.0) * x ** (aux - 2.0) if aux not in (0.0, 1.0) else 0.0
            vbar[a] += zv * d1 + zt * d2 * tan[a]
            tbar[a] += zt * d1
        elif kind == _TANH:
            (a,) = args
            v = val[i]
            d1 = 1.0 - v * v
            d2 = -2.0 * v * d1
            vbar[a] += zv * d1 + zt * d2 * tan[a]
            tbar[a] += zt * d1
        elif kind == _EXP:
            (a,) = args
            v = val[i]
            vbar[a] += zv * v + zt * v * tan[a]
            tbar[a] += zt * v
        elif kind == _SIN:
            (a,) = args
            c = math.cos(val[a])
            s = val[i]
            vbar[a] += zv * c - zt * s * tan[a]
            tbar[a] += zt * c
        elif kind == _COS:
            (a,) = args
            s = math.sin(val[a])
            c = val[i]
            vbar[a] += -zv * s - zt * c * tan[a]
            tbar[a] += -zt * s
        elif kind == _AFFINE:
            widx, xidx, bidx = args
            for w, x in zip(widx, xidx):
                vbar[w] += zv * val[x] + zt * tan[x]
                tbar[w] += zt * val[x]
                vbar[x] += zv * val[w] + zt * tan[w]
                tbar[x] += zt * val[w]
            vbar[bidx] += zv
            tbar[bidx] += zt

    if not tape.param_slots:
        return np.zeros(0)
    grad = np.zeros(max(tape.param_slots) + 1)
    for slot, node in tape.param_slots.items():
        grad[slot] = vbar[node]
    return grad
