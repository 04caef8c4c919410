"""Identification functionals as evaluable expression trees.

A tree records how an identified kernel is computed from the observed joint:
factors, sums, products, ratios, axis relabelings, context slices, constant
broadcasts, and bridge solves. Evaluating the tree against a fresh joint
table replays the derivation, so certificates can be checked on data the
search never saw.

Axis names follow the graph's vertex names; a bridge solve emits its
operator-slot axes under primed names (``W`` becomes ``W~``) so that the
solved table can be contracted against relabeled data factors without
colliding with the original axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bridges import KINDS, BridgeProblem, solve_bridge
from .errors import EvaluationError
from .kernels import Kernel, contract, table_ratio, table_relabel, table_slice

Table = tuple[tuple[str, ...], np.ndarray]


def primed(names) -> tuple[str, ...]:
    return tuple(f"{n}~" for n in names)


@dataclass(frozen=True)
class Factor:
    """p(variables | given), read off the observed joint."""

    variables: tuple[str, ...]
    given: tuple[str, ...] = ()


@dataclass(frozen=True)
class Sum:
    bound: tuple[str, ...]
    child: "IdentExpr"


@dataclass(frozen=True)
class Product:
    children: tuple["IdentExpr", ...]


@dataclass(frozen=True)
class Ratio:
    num: "IdentExpr"
    den: "IdentExpr"


@dataclass(frozen=True)
class Relabel:
    mapping: tuple[tuple[str, str], ...]
    child: "IdentExpr"


@dataclass(frozen=True)
class Slice:
    assignment: tuple[tuple[str, int], ...]
    child: "IdentExpr"


@dataclass(frozen=True)
class Ones:
    """All-ones table; broadcasts an axis a kernel is constant in."""

    variables: tuple[str, ...]


@dataclass(frozen=True)
class BridgeSolve:
    """Solve a bridge system built from two child expressions.

    Evaluates to the solved table with axes row_vars + primed(op_vars) +
    ctx_vars. For extended kinds the out_slot names the trailing row axes
    that a later Sum node collapses.
    """

    kind: str
    operator: "IdentExpr"
    rhs: "IdentExpr"
    row_vars: tuple[str, ...]
    op_vars: tuple[str, ...]
    probe_vars: tuple[str, ...]
    ctx_vars: tuple[str, ...]
    out_slot: tuple[str, ...] = ()
    tol: float = 1e-8


IdentExpr = Factor | Sum | Product | Ratio | Relabel | Slice | Ones | BridgeSolve


# ---------------------------------------------------------------------------
# bridge stacking shared with the operator layer


def _block_shapes(names, arr, groups):
    order = tuple(n for group in groups for n in group)
    if set(names) != set(order) or len(names) != len(order):
        raise EvaluationError(
            f"bridge table axes {names} do not match declared roles {order}"
        )
    aligned = contract([(tuple(names), arr)], order)
    shapes = []
    at = 0
    for group in groups:
        shapes.append(aligned.shape[at : at + len(group)])
        at += len(group)
    flat = aligned.reshape(tuple(int(np.prod(s)) for s in shapes))
    return flat, shapes


def stack_bridge_problem(
    kind, operator: Table, rhs: Table, row_vars, op_vars, probe_vars, ctx_vars,
    out_slot=(),
) -> tuple[BridgeProblem, tuple[int, ...], tuple[int, ...], tuple[int, ...]]:
    """Arrange two named tables into the per-context linear systems."""
    if kind not in KINDS:
        raise EvaluationError(f"unknown bridge kind {kind!r}")
    op_flat, (ctx_shape, op_shape, _) = _block_shapes(
        operator[0], operator[1], (ctx_vars, op_vars, probe_vars)
    )
    rhs_flat, (rhs_ctx, row_shape, _) = _block_shapes(
        rhs[0], rhs[1], (ctx_vars, row_vars, probe_vars)
    )
    if tuple(ctx_shape) != tuple(rhs_ctx):
        raise EvaluationError("operator and rhs disagree on context cardinalities")
    problem = BridgeProblem(
        kind=kind,
        operator=op_flat,
        rhs=rhs_flat,
        row_vars=tuple(row_vars),
        op_vars=tuple(op_vars),
        probe_vars=tuple(probe_vars),
        ctx_vars=tuple(ctx_vars),
        out_slot=tuple(out_slot),
        row_shape=tuple(row_shape),
    )
    return problem, tuple(ctx_shape), tuple(row_shape), tuple(op_shape)


def unstack_values(values, row_vars, row_shape, op_vars, op_shape, ctx_vars, ctx_shape) -> Table:
    """Turn solver output (ctx, rows, ops) back into a named table."""
    full = values.reshape(tuple(ctx_shape) + tuple(row_shape) + tuple(op_shape))
    nc, nr, no = len(ctx_vars), len(row_vars), len(op_vars)
    perm = (
        list(range(nc, nc + nr))
        + list(range(nc + nr, nc + nr + no))
        + list(range(nc))
    )
    names = tuple(row_vars) + primed(op_vars) + tuple(ctx_vars)
    return names, np.transpose(full, perm)


# ---------------------------------------------------------------------------
# evaluation


def evaluate(expr: IdentExpr, obs: Kernel) -> Table:
    """Replay the derivation against a context-free joint table."""
    if obs.context:
        raise EvaluationError("expressions evaluate against a plain joint table")
    return _eval(expr, obs, {})


def _eval(expr, obs: Kernel, memo: dict) -> Table:
    hit = memo.get(id(expr))
    if hit is not None:
        return hit
    result = _eval_node(expr, obs, memo)
    memo[id(expr)] = result
    return result


def _eval_node(expr, obs: Kernel, memo) -> Table:
    if isinstance(expr, Factor):
        unknown = [n for n in expr.variables + expr.given if n not in obs.variables]
        if unknown:
            raise EvaluationError(f"factor names {unknown} missing from the data")
        target = expr.variables + expr.given
        num = contract([obs.table()], target)
        if not expr.given:
            return target, num
        den = contract([obs.table()], expr.given)
        return table_ratio((target, num), (expr.given, den))
    if isinstance(expr, Sum):
        names, arr = _eval(expr.child, obs, memo)
        missing = set(expr.bound) - set(names)
        if missing:
            raise EvaluationError(f"sum binds absent axes {sorted(missing)}")
        keep = tuple(n for n in names if n not in expr.bound)
        return keep, contract([(names, arr)], keep)
    if isinstance(expr, Product):
        tables = [_eval(c, obs, memo) for c in expr.children]
        out = []
        for names, _ in tables:
            out.extend(n for n in names if n not in out)
        return tuple(out), contract(tables, tuple(out))
    if isinstance(expr, Ratio):
        num = _eval(expr.num, obs, memo)
        den = _eval(expr.den, obs, memo)
        return table_ratio(num, den)
    if isinstance(expr, Relabel):
        names, arr = _eval(expr.child, obs, memo)
        mapping = dict(expr.mapping)
        unused = set(mapping) - set(names)
        if unused:
            raise EvaluationError(f"relabel of absent axes {sorted(unused)}")
        return table_relabel(names, mapping), arr
    if isinstance(expr, Slice):
        names, arr = _eval(expr.child, obs, memo)
        assignment = dict(expr.assignment)
        missing = set(assignment) - set(names)
        if missing:
            raise EvaluationError(f"slice of absent axes {sorted(missing)}")
        return table_slice(names, arr, assignment)
    if isinstance(expr, Ones):
        try:
            shape = tuple(obs.cards[n] for n in expr.variables)
        except KeyError as err:
            raise EvaluationError(f"no cardinality known for axis {err}") from None
        return expr.variables, np.ones(shape)
    if isinstance(expr, BridgeSolve):
        operator = _eval(expr.operator, obs, memo)
        rhs = _eval(expr.rhs, obs, memo)
        problem, ctx_shape, row_shape, op_shape = stack_bridge_problem(
            expr.kind, operator, rhs, expr.row_vars, expr.op_vars,
            expr.probe_vars, expr.ctx_vars, expr.out_slot,
        )
        sol = solve_bridge(problem, tol=expr.tol)
        return unstack_values(
            sol.values, expr.row_vars, row_shape, expr.op_vars, op_shape,
            expr.ctx_vars, ctx_shape,
        )
    raise EvaluationError(f"not an expression node: {expr!r}")


# ---------------------------------------------------------------------------
# printing


def _group(names) -> str:
    return "(" + " ".join(names) + ")"


def to_sexpr(expr: IdentExpr) -> str:
    """Deterministic s-expression rendering for certificates."""
    if isinstance(expr, Factor):
        if expr.given:
            return f"(p {_group(expr.variables)} {_group(expr.given)})"
        return f"(p {_group(expr.variables)})"
    if isinstance(expr, Sum):
        return f"(sum {_group(expr.bound)} {to_sexpr(expr.child)})"
    if isinstance(expr, Product):
        inner = " ".join(to_sexpr(c) for c in expr.children)
        return f"(prod {inner})"
    if isinstance(expr, Ratio):
        return f"(ratio {to_sexpr(expr.num)} {to_sexpr(expr.den)})"
    if isinstance(expr, Relabel):
        pairs = " ".join(f"({a} {b})" for a, b in expr.mapping)
        return f"(relabel ({pairs}) {to_sexpr(expr.child)})"
    if isinstance(expr, Slice):
        pairs = " ".join(f"({n} {s})" for n, s in expr.assignment)
        return f"(slice ({pairs}) {to_sexpr(expr.child)})"
    if isinstance(expr, Ones):
        return f"(ones {_group(expr.variables)})"
    if isinstance(expr, BridgeSolve):
        return (
            f"({expr.kind}-bridge rows {_group(expr.row_vars)}"
            f" op {_group(expr.op_vars)} probe {_group(expr.probe_vars)}"
            f" ctx {_group(expr.ctx_vars)} slot {_group(expr.out_slot)}"
            f" {to_sexpr(expr.operator)} {to_sexpr(expr.rhs)})"
        )
    raise EvaluationError(f"not an expression node: {expr!r}")
