"""Kernel operations for identification: Fix, Obf, Tbf, Ebf, Cut.

Each operation consumes interventional kernels p(R || S), verifies its
admissibility conditions, and emits the output kernel with a replayable
provenance expression attached.  Graphical conditions are read off
intervention graphs by d-separation; non-graphical ones (completeness,
bridge solvability, positivity) are checked numerically when a model is
supplied ("oracle" mode) and echoed as user assertions otherwise
("declared" mode).
"""

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .bridges import completeness_rank, marginalize_extended, solve_bridge
from .errors import (
    ConditionFailed,
    GraphError,
    ModelError,
    NoSolutionError,
    PositivityViolation,
)
from .expr import (
    BridgeSolve,
    Ones,
    Product,
    Ratio,
    Relabel,
    Sum,
    primed,
    stack_bridge_problem,
    unstack_values,
)
from .graphs import (
    CausalGraph,
    cadmg,
    d_separated,
    fixability_witness,
    fixable,
    markov_blanket,
    materialize_bidirected,
    swig,
)
from .kernels import DIV_FLOOR, Kernel, contract, table_ratio, table_relabel
from .kernels import fix as _kernel_fix

OP_KINDS = ("Fix", "Obf", "Tbf", "Ebf", "Cut")
MODES = ("declared", "oracle")


@dataclass(frozen=True)
class OpStep:
    """One (B, K, W, Z) tuple consumed by the identification loop."""

    b: str
    k: str
    w_set: tuple[str, ...] = ()
    z_set: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "w_set", tuple(sorted(set(self.w_set))))
        object.__setattr__(self, "z_set", tuple(sorted(set(self.z_set))))
        if self.k not in OP_KINDS:
            raise ValueError(f"unknown operation kind {self.k!r}")
        bridged = self.k in ("Obf", "Tbf", "Ebf")
        if bridged and not (self.w_set and self.z_set):
            raise ValueError(f"{self.k} needs nonempty proxy sets")
        if not bridged and (self.w_set or self.z_set):
            raise ValueError(f"{self.k} takes no proxy sets")
        if self.b in self.w_set or self.b in self.z_set:
            raise ValueError("the reindexed vertex cannot be its own proxy")
        if set(self.w_set) & set(self.z_set):
            raise ValueError("proxy sets must be disjoint")


@dataclass(frozen=True)
class GraphicalCheck:
    assumption: str
    statement: str
    passed: bool


@dataclass(frozen=True)
class NumericalCheck:
    check: str
    value: float | None
    passed: bool
    detail: str = ""


@dataclass(frozen=True)
class PreconditionReport:
    """Audit trail for one operation: every condition consulted, once."""

    op: OpStep
    mode: str
    graphical_checks: tuple[GraphicalCheck, ...]
    numerical_checks: tuple[NumericalCheck, ...]
    u_star: tuple[str, ...] | None
    route: str | None = None
    w_source: str | None = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.graphical_checks) and all(
            c.passed for c in self.numerical_checks
        )

    @property
    def passed_count(self) -> int:
        return sum(c.passed for c in self.graphical_checks) + sum(
            c.passed for c in self.numerical_checks
        )

    def summary(self) -> str:
        star = "" if self.u_star is None else f", U*={_fmt(self.u_star)}"
        head = f"{self.op.k}({self.op.b}) [mode={self.mode}{star}]"
        if self.passed:
            return head + ": all conditions hold"
        failed = [
            f"{c.assumption}: {c.statement}"
            for c in self.graphical_checks
            if not c.passed
        ]
        for c in self.numerical_checks:
            if not c.passed:
                value = "" if c.value is None else f" = {c.value:.3e}"
                failed.append(c.check + value)
        return head + ": failed " + "; ".join(failed)

    def to_dict(self) -> dict:
        return {
            "op": {
                "b": self.op.b,
                "k": self.op.k,
                "w_set": list(self.op.w_set),
                "z_set": list(self.op.z_set),
            },
            "mode": self.mode,
            "u_star": None if self.u_star is None else list(self.u_star),
            "route": self.route,
            "w_source": self.w_source,
            "passed": self.passed,
            "graphical_checks": [
                {"assumption": c.assumption, "statement": c.statement, "passed": c.passed}
                for c in self.graphical_checks
            ],
            "numerical_checks": [
                {"check": c.check, "value": c.value, "passed": c.passed, "detail": c.detail}
                for c in self.numerical_checks
            ],
        }


def _fmt(names) -> str:
    return "{" + ",".join(names) + "}"


# ---------------------------------------------------------------------------
# role sets


@dataclass(frozen=True)
class _Roles:
    """The box's variable roles: removed descendants, retained proxies,
    and the shared adjustment block X."""

    b: str
    w: tuple[str, ...]
    z: tuple[str, ...]
    o: tuple[str, ...]
    x: tuple[str, ...]
    w_star: tuple[str, ...]
    z_star: tuple[str, ...]
    w_tilde: tuple[str, ...]
    z_tilde: tuple[str, ...]
    w_source: str | None = None


def _bridge_roles(step: OpStep, p1: Kernel, p2: Kernel, gm: CausalGraph) -> _Roles:
    b = step.b
    w, z = set(step.w_set), set(step.z_set)
    r1 = set(p1.variables)
    # the descendant set is taken in the input graph with the outcome-side
    # (Obf) or treatment-side (Tbf) proxies removed; Ebf keeps everything
    drop = {"Obf": w, "Tbf": z, "Ebf": set()}[step.k]
    de_graph = cadmg(gm, r1 - drop, p1.context)
    de = set(de_graph.descendants([b]))
    w_star = de & w if step.k in ("Tbf", "Ebf") else set()
    z_star = de & z if step.k in ("Obf", "Ebf") else set()
    if step.k == "Obf":
        o = de - z - {b}
    elif step.k == "Tbf":
        o = de - w - {b}
    else:
        o = de - w - z - {b}
    x = r1 - o - {b} - w - z
    w_source = None
    if step.k == "Obf":
        if w <= r1:
            w_source = "p1"
        elif w | (r1 - o) <= set(p2.variables):
            w_source = "p2"
    return _Roles(
        b=b,
        w=gm.vset(w),
        z=gm.vset(z),
        o=gm.vset(o),
        x=gm.vset(x),
        w_star=gm.vset(w_star),
        z_star=gm.vset(z_star),
        w_tilde=gm.vset(w - w_star),
        z_tilde=gm.vset(z - z_star),
        w_source=w_source,
    )


# ---------------------------------------------------------------------------
# bridge-system assembly (shared by checking and applying)


@dataclass
class _Pieces:
    problem: object
    ctx_shape: tuple[int, ...]
    row_shape: tuple[int, ...]
    op_shape: tuple[int, ...]
    row_vars: tuple[str, ...]
    op_vars: tuple[str, ...]
    ctx_vars: tuple[str, ...]
    node: object | None
    factor: tuple
    factor_expr: object | None
    relabel: tuple[tuple[str, str], ...]


def _maybe_sum(bound, child):
    return Sum(tuple(bound), child) if bound else child


def _sum_expr(k: Kernel, keep):
    if k.provenance is None:
        return None
    bound = tuple(v for v in k.variables if v not in set(keep))
    return _maybe_sum(bound, k.provenance)


def _cond_expr(k: Kernel, keep, given):
    """Expression for p(keep | given || k.context) over k's provenance."""
    if k.provenance is None:
        return None
    block = set(keep) | set(given)
    num = _maybe_sum(tuple(v for v in k.variables if v not in block), k.provenance)
    den = _maybe_sum(tuple(v for v in k.variables if v not in set(given)), k.provenance)
    return Ratio(num, den)


def _conditional(k: Kernel, keep, given) -> Kernel:
    return k.marginal(set(keep) | set(given)).condition(given)


def _obf_pieces(p1: Kernel, p2: Kernel, roles: _Roles, tol: float) -> _Pieces:
    src = p1 if roles.w_source == "p1" else p2
    given = roles.z + (roles.b,) + roles.x
    ctx = (roles.b,) + roles.x + p1.context
    op_k = _conditional(src, roles.w, given)
    rhs_k = _conditional(p1, roles.o, given)
    problem, ctx_shape, row_shape, op_shape = stack_bridge_problem(
        "outcome", op_k.table(), rhs_k.table(), roles.o, roles.w, roles.z, ctx
    )
    node = None
    op_expr = _cond_expr(src, roles.w, given)
    rhs_expr = _cond_expr(p1, roles.o, given)
    if op_expr is not None and rhs_expr is not None:
        node = BridgeSolve("outcome", op_expr, rhs_expr, roles.o, roles.w, roles.z, ctx, (), tol)
    keep = set(roles.w) | set(roles.z_tilde) | set(roles.x)
    return _Pieces(
        problem=problem,
        ctx_shape=ctx_shape,
        row_shape=row_shape,
        op_shape=op_shape,
        row_vars=roles.o,
        op_vars=roles.w,
        ctx_vars=ctx,
        node=node,
        factor=src.marginal(keep).table(),
        factor_expr=_sum_expr(src, keep),
        relabel=tuple(zip(roles.w, primed(roles.w))),
    )


def _tbf_pieces(p: Kernel, roles: _Roles, tol: float) -> _Pieces:
    given = roles.w + (roles.b,) + roles.x
    ctx = (roles.b,) + roles.x + p.context
    op_k = _conditional(p, roles.z, given)
    den_k = _conditional(p, (roles.b,), roles.w + roles.x)
    rhs = (den_k.names, 1.0 / den_k.probs)
    problem, ctx_shape, row_shape, op_shape = stack_bridge_problem(
        "treatment", op_k.table(), rhs, (), roles.z, roles.w, ctx
    )
    node = None
    op_expr = _cond_expr(p, roles.z, given)
    den_expr = _cond_expr(p, (roles.b,), roles.w + roles.x)
    if op_expr is not None and den_expr is not None:
        rhs_expr = Ratio(Ones(den_k.names), den_expr)
        node = BridgeSolve("treatment", op_expr, rhs_expr, (), roles.z, roles.w, ctx, (), tol)
    keep = set(roles.o) | set(roles.w_tilde) | set(roles.z) | {roles.b} | set(roles.x)
    return _Pieces(
        problem=problem,
        ctx_shape=ctx_shape,
        row_shape=row_shape,
        op_shape=op_shape,
        row_vars=(),
        op_vars=roles.z,
        ctx_vars=ctx,
        node=node,
        factor=p.marginal(keep).table(),
        factor_expr=_sum_expr(p, keep),
        relabel=tuple(zip(roles.z, primed(roles.z))),
    )


def _ebf_pieces(p: Kernel, roles: _Roles, tol: float, route: str) -> _Pieces:
    ctx = (roles.b,) + roles.x + p.context
    if route == "outcome":
        # slot axes must trail the row block so marginalization can strip them
        rows = roles.o + roles.w_tilde
        kind = "extended_outcome" if roles.w_tilde else "outcome"
        given = roles.z + (roles.b,) + roles.x
        op_k = _conditional(p, roles.w, given)
        rhs_k = _conditional(p, rows, given)
        problem, ctx_shape, row_shape, op_shape = stack_bridge_problem(
            kind, op_k.table(), rhs_k.table(), rows, roles.w, roles.z, ctx,
            out_slot=roles.w_tilde,
        )
        node = None
        op_expr = _cond_expr(p, roles.w, given)
        rhs_expr = _cond_expr(p, rows, given)
        if op_expr is not None and rhs_expr is not None:
            node = BridgeSolve(
                kind, op_expr, rhs_expr, rows, roles.w, roles.z, ctx, roles.w_tilde, tol
            )
        keep = set(roles.w) | set(roles.z_tilde) | set(roles.x)
        return _Pieces(
            problem=problem,
            ctx_shape=ctx_shape,
            row_shape=row_shape,
            op_shape=op_shape,
            row_vars=rows,
            op_vars=roles.w,
            ctx_vars=ctx,
            node=node,
            factor=p.marginal(keep).table(),
            factor_expr=_sum_expr(p, keep),
            relabel=tuple(zip(roles.w, primed(roles.w))),
        )
    if route != "treatment":
        raise ValueError(f"unknown route {route!r}")
    rows = roles.z_tilde
    kind = "extended_treatment" if roles.z_tilde else "treatment"
    given = roles.w + (roles.b,) + roles.x
    op_k = _conditional(p, roles.z, given)
    num_k = _conditional(p, roles.z_tilde, roles.w + roles.x)
    den_k = _conditional(p, (roles.b,), roles.w + roles.x)
    rhs = table_ratio(num_k.table(), den_k.table())
    problem, ctx_shape, row_shape, op_shape = stack_bridge_problem(
        kind, op_k.table(), rhs, rows, roles.z, roles.w, ctx, out_slot=rows
    )
    node = None
    op_expr = _cond_expr(p, roles.z, given)
    num_expr = _cond_expr(p, roles.z_tilde, roles.w + roles.x)
    den_expr = _cond_expr(p, (roles.b,), roles.w + roles.x)
    if op_expr is not None and num_expr is not None and den_expr is not None:
        node = BridgeSolve(
            kind, op_expr, Ratio(num_expr, den_expr), rows, roles.z, roles.w, ctx, rows, tol
        )
    keep = set(roles.o) | set(roles.w_tilde) | set(roles.z) | {roles.b} | set(roles.x)
    return _Pieces(
        problem=problem,
        ctx_shape=ctx_shape,
        row_shape=row_shape,
        op_shape=op_shape,
        row_vars=rows,
        op_vars=roles.z,
        ctx_vars=ctx,
        node=node,
        factor=p.marginal(keep).table(),
        factor_expr=_sum_expr(p, keep),
        relabel=tuple(zip(roles.z, primed(roles.z))),
    )


def _emit(pieces: _Pieces, sol, out_vars, out_ctx, cards) -> Kernel:
    values = unstack_values(
        sol.values,
        pieces.row_vars,
        pieces.row_shape,
        pieces.op_vars,
        pieces.op_shape,
        pieces.ctx_vars,
        pieces.ctx_shape,
    )
    fac_names, fac_arr = pieces.factor
    renamed = table_relabel(fac_names, dict(pieces.relabel))
    arr = contract([values, (renamed, fac_arr)], tuple(out_vars) + tuple(out_ctx))
    prov = None
    if pieces.node is not None and pieces.factor_expr is not None:
        prov = Sum(
            primed(pieces.op_vars),
            Product((pieces.node, Relabel(pieces.relabel, pieces.factor_expr))),
        )
    return Kernel(tuple(out_vars), tuple(out_ctx), cards, arr, prov)


# ---------------------------------------------------------------------------
# numerical condition checks


def _positivity_value(p: Kernel, b: str, w, x) -> float:
    """min over states of p(b | w, x || s); 0.0 when a (w,x) slice has no mass."""
    names = (b,) + tuple(w) + tuple(x) + p.context
    num = contract([p.table()], names)
    den = num.sum(axis=0)
    if den.size and float(den.min()) < DIV_FLOOR:
        return 0.0
    return float((num / den[None]).min())


def _positivity_row(value: float, roles: _Roles, p: Kernel) -> NumericalCheck:
    detail = f"min p({roles.b} | {_fmt(roles.w + roles.x)} || {_fmt(p.context)})"
    return NumericalCheck("positivity", value, value > DIV_FLOOR, detail)


def _solve_row(check_id: str, problem, tol: float) -> NumericalCheck:
    try:
        sol = solve_bridge(problem, tol=tol)
    except NoSolutionError as err:
        return NumericalCheck(check_id, err.residual, False, "no solution within tolerance")
    detail = f"max cond {float(sol.conds.max()):.2e}"
    if sol.ill_conditioned:
        detail += " (ill-conditioned)"
    return NumericalCheck(check_id, sol.residual, True, detail)


def _completeness_row(check_id, model, u, probe, roles, s) -> NumericalCheck:
    g = model.graph
    u_t, probe_t = g.vset(u), g.vset(probe)
    bx_t, s_t = g.vset((roles.b,) + roles.x), g.vset(s)
    k = model.interventional(u_t + probe_t + bx_t, s_t)
    given = u_t + bx_t
    cond = k.condition(given) if given else k
    arr = contract([cond.table()], bx_t + s_t + u_t + probe_t)
    n_ctx = int(np.prod([model.cards[v] for v in bx_t + s_t]))
    n_u = int(np.prod([model.cards[v] for v in u_t]))
    n_probe = int(np.prod([model.cards[v] for v in probe_t]))
    rep = completeness_rank(arr.reshape(n_ctx, n_u, n_probe))
    detail = f"rank {int(rep.ranks.min())} of required {rep.required_rank}"
    if not rep.complete:
        detail += f"; deficient at context {rep.deficient_context}"
    return NumericalCheck(check_id, float(rep.ranks.min()), rep.complete, detail)


# ---------------------------------------------------------------------------
# precondition checking


def _latent_subsets(gm: CausalGraph):
    lat = gm.vset(gm.latent)
    for size in range(len(lat) + 1):
        yield from combinations(lat, size)


def _ci_row(assumption, sw, xs, ys, cond, world, gm) -> GraphicalCheck:
    xs_t, ys_t, cond_t = gm.vset(xs), gm.vset(ys), gm.vset(cond)
    ok = d_separated(sw, xs_t, ys_t, cond_t)
    stmt = f"{_fmt(xs_t)} _||_ {_fmt(ys_t)} | {_fmt(cond_t)} after do{world}"
    return GraphicalCheck(assumption, stmt, ok)


def _ci_rows(step, roles, u, sw_s, sw_sb, world_s, world_sb, gm):
    b = roles.b
    if step.k == "Obf":
        ign_cond = u + roles.z_tilde + roles.x
        tp_cond = (b,) + u + roles.x
    elif step.k == "Tbf":
        ign_cond = u + roles.w_tilde + roles.x
        tp_cond = roles.w_tilde + (b,) + u + roles.x
    else:
        ign_cond = u + roles.w_tilde + roles.z_tilde + roles.x
        tp_cond = roles.w_tilde + (b,) + u + roles.x
    return (
        _ci_row("latent-ignorability", sw_sb, roles.o, (b,), ign_cond, world_sb, gm),
        _ci_row("outcome-proxy-valid", sw_s, roles.w, roles.z + (b,), u + roles.x, world_s, gm),
        _ci_row("treatment-proxy-valid", sw_s, roles.o, roles.z, tp_cond, world_s, gm),
    )


def _shared_numerical(step, p1, p2, roles, mode, tol) -> dict:
    out = {}
    if step.k == "Obf":
        if mode == "declared":
            out["bridge"] = NumericalCheck("bridge-outcome", None, True, "declared")
        elif roles.w_source is None:
            out["bridge"] = NumericalCheck(
                "bridge-outcome", None, False, "skipped: no admissible proxy placement"
            )
        else:
            pieces = _obf_pieces(p1, p2, roles, tol)
            out["bridge"] = _solve_row("bridge-outcome", pieces.problem, tol)
    elif step.k == "Tbf":
        value = _positivity_value(p1, roles.b, roles.w, roles.x)
        out["positivity"] = _positivity_row(value, roles, p1)
        if mode == "declared":
            out["bridge"] = NumericalCheck("bridge-treatment", None, True, "declared")
        elif value <= DIV_FLOOR:
            out["bridge"] = NumericalCheck(
                "bridge-treatment", None, False, "skipped: positivity violated"
            )
        else:
            pieces = _tbf_pieces(p1, roles, tol)
            out["bridge"] = _solve_row("bridge-treatment", pieces.problem, tol)
    else:
        kind_o = "bridge-extended-outcome" if roles.w_tilde else "bridge-outcome"
        kind_t = "bridge-extended-treatment" if roles.z_tilde else "bridge-treatment"
        if mode == "declared":
            out["bridge_outcome"] = NumericalCheck(kind_o, None, True, "declared")
        else:
            pieces = _ebf_pieces(p1, roles, tol, "outcome")
            out["bridge_outcome"] = _solve_row(kind_o, pieces.problem, tol)
            value = _positivity_value(p1, roles.b, roles.w, roles.x)
            out["positivity"] = _positivity_row(value, roles, p1)
            if value <= DIV_FLOOR:
                out["bridge_treatment"] = NumericalCheck(
                    kind_t, None, False, "skipped: positivity violated"
                )
            else:
                pieces_t = _ebf_pieces(p1, roles, tol, "treatment")
                out["bridge_treatment"] = _solve_row(kind_t, pieces_t.problem, tol)
    return out


def _numerical_rows(step, roles, u, shared, mode, model, s, comp_cache):
    def comp(check_id, probe):
        if mode == "declared":
            return NumericalCheck(check_id, None, True, "declared")
        key = (check_id, u)
        if key not in comp_cache:
            comp_cache[key] = _completeness_row(check_id, model, u, probe, roles, s)
        return comp_cache[key]

    if step.k == "Obf":
        return (comp("completeness-outcome", roles.z), shared["bridge"]), "outcome"
    if step.k == "Tbf":
        rows = (comp("completeness-treatment", roles.w), shared["bridge"], shared["positivity"])
        return rows, "treatment"
    out_rows = (comp("completeness-outcome", roles.z), shared["bridge_outcome"])
    if mode == "declared" or all(r.passed for r in out_rows):
        return out_rows, "outcome"
    tr_rows = (
        comp("completeness-treatment", roles.w),
        shared["bridge_treatment"],
        shared["positivity"],
    )
    if all(r.passed for r in tr_rows):
        return tr_rows, "treatment"
    return out_rows + tr_rows, None


def _check_fix(step, p, gm, mode) -> PreconditionReport:
    member = step.b in p.variables
    rows = [GraphicalCheck("input-membership", f"{step.b} in Var(P)", member)]
    if member:
        graph = cadmg(gm, p.variables, p.context)
        ok = fixable(graph, step.b)
        if ok:
            stmt = f"dis({step.b}) & de({step.b}) = {{{step.b}}}"
        else:
            stmt = f"dis({step.b}) & de({step.b}) contains {_fmt(fixability_witness(graph, step.b))}"
        rows.append(GraphicalCheck("fixable", stmt, ok))
    return PreconditionReport(step, mode, tuple(rows), (), None)


def _check_bridge(step, p1, p2, gm, mode, model, tol) -> PreconditionReport:
    b = step.b
    r1 = set(p1.variables)
    if step.k == "Obf":
        member = b in r1 and set(step.z_set) <= r1
        stmt = f"{b} in Var(P1) and {_fmt(step.z_set)} inside Var(P1)"
    else:
        member = b in r1 and set(step.z_set) <= r1 and set(step.w_set) <= r1
        stmt = f"{b}, {_fmt(step.w_set)}, {_fmt(step.z_set)} inside Var(P)"
    member_row = GraphicalCheck("input-membership", stmt, member)
    if not member:
        return PreconditionReport(step, mode, (member_row,), (), None)

    roles = _bridge_roles(step, p1, p2, gm)
    head = [member_row]
    if step.k == "Obf":
        if roles.w_source == "p1":
            stmt = f"{_fmt(roles.w)} inside Var(P1)"
        elif roles.w_source == "p2":
            stmt = f"{_fmt(roles.w)} and Var(P1) minus {_fmt(roles.o)} inside Var(P2)"
        else:
            stmt = f"{_fmt(roles.w)} in neither Var(P1) nor, with Var(P1) minus O, in Var(P2)"
        head.append(GraphicalCheck("proxy-placement", stmt, roles.w_source is not None))

    s = p1.context
    sw_s = swig(gm, s)
    sw_sb = swig(gm, set(s) | {b})
    world_s = _fmt(gm.vset(s))
    world_sb = _fmt(gm.vset(set(s) | {b}))
    shared = _shared_numerical(step, p1, p2, roles, mode, tol)
    comp_cache: dict = {}

    best = None
    best_key = (-1, 0)
    for u in _latent_subsets(gm):
        rows_g = tuple(head) + _ci_rows(step, roles, u, sw_s, sw_sb, world_s, world_sb, gm)
        rows_n, route = _numerical_rows(step, roles, u, shared, mode, model, s, comp_cache)
        report = PreconditionReport(
            step, mode, rows_g, rows_n, u, route=route, w_source=roles.w_source
        )
        if report.passed:
            return report
        key = (report.passed_count, -len(u))
        if key > best_key:
            best, best_key = report, key
    return best


def check_preconditions(
    step: OpStep,
    p1: Kernel,
    p2: Kernel | None = None,
    g_full: CausalGraph | None = None,
    mode: str = "declared",
    *,
    model=None,
    tol: float = 1e-8,
) -> PreconditionReport:
    """Evaluate every admissibility condition of `step` on the input kernels.

    Candidate adjustment sets U* are enumerated over subsets of the latent
    vertices, smallest first; the first fully passing candidate wins,
    otherwise the best-failing report is returned.  Reports never raise.
    """
    if g_full is None:
        raise GraphError("check_preconditions needs the full latent graph")
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "oracle" and model is None:
        raise ModelError("oracle mode needs a DiscreteModel")
    if p2 is None:
        p2 = p1
    elif step.k == "Obf" and set(p1.context) != set(p2.context):
        raise ModelError("P1 and P2 must share the same fixed context")
    gm = materialize_bidirected(g_full)
    if step.k == "Cut":
        return PreconditionReport(step, mode, (), (), None)
    if step.k == "Fix":
        return _check_fix(step, p1, gm, mode)
    return _check_bridge(step, p1, p2, gm, mode, model, tol)


# ---------------------------------------------------------------------------
# the operations


def _raise_for(report: PreconditionReport):
    for row in report.numerical_checks:
        if row.check == "positivity" and not row.passed:
            raise PositivityViolation(f"{row.detail} = {row.value:.3e}")
    raise ConditionFailed(report)


def apply_fix(p: Kernel, b: str, g_full: CausalGraph) -> Kernel:
    """Fix b: divide out its district conditional, move b into the context."""
    prov = None
    if p.provenance is not None and b in p.variables:
        graph = cadmg(g_full, p.variables, p.context)
        if fixable(graph, b):
            blanket = set(markov_blanket(graph, b))
            mbv = set(v for v in p.variables if v in blanket)
            num = _maybe_sum(
                tuple(v for v in p.variables if v not in mbv | {b}), p.provenance
            )
            den = _maybe_sum(tuple(v for v in p.variables if v not in mbv), p.provenance)
            prov = Ratio(p.provenance, Ratio(num, den))
    return _kernel_fix(p, b, g_full, provenance=prov)


def apply_cut(p: Kernel, b: str, g_full: CausalGraph) -> Kernel:
    """Cut b: drop its descendants and re-index b as context, constant in b.

    Needs p.cards to cover b; b may already be gone from the kernel's
    random block (a prior cut), in which case only the broadcast happens.
    """
    if b in p.context:
        raise ModelError(f"{b} is already fixed in the kernel context")
    g_full.index(b)
    gm = materialize_bidirected(g_full)
    observed = tuple(v for v in gm.observed if v not in set(p.context))
    graph = cadmg(gm, observed, p.context)
    de = set(graph.descendants([b]))
    keep = tuple(v for v in p.variables if v not in de)
    dropped = tuple(v for v in p.variables if v in de)
    marg = p.marginal(keep)
    arr = np.broadcast_to(
        marg.probs[..., None], marg.probs.shape + (p.cards[b],)
    ).copy()
    prov = None
    if p.provenance is not None:
        prov = Product((_maybe_sum(dropped, p.provenance), Ones((b,))))
    out = Kernel(keep, p.context + (b,), p.cards, arr, prov)
    assert set(out.variables) == set(p.variables) - de
    return out


def apply_obf(
    p1: Kernel,
    p2: Kernel | None,
    step: OpStep,
    g_full: CausalGraph,
    mode: str = "declared",
    *,
    model=None,
    tol: float = 1e-8,
) -> Kernel:
    """Outcome-bridge step: solve for h, emit p(O, Z~, X || S, b)."""
    if step.k != "Obf":
        raise ValueError(f"apply_obf got a {step.k} step")
    if p2 is None:
        p2 = p1
    report = check_preconditions(step, p1, p2, g_full, mode, model=model, tol=tol)
    if not report.passed:
        raise ConditionFailed(report)
    gm = materialize_bidirected(g_full)
    roles = _bridge_roles(step, p1, p2, gm)
    pieces = _obf_pieces(p1, p2, roles, tol)
    sol = solve_bridge(pieces.problem, tol=tol)
    out_vars = gm.vset(set(roles.o) | set(roles.z_tilde) | set(roles.x))
    out = _emit(pieces, sol, out_vars, p1.context + (step.b,), p1.cards)
    assert set(out.variables) == set(p1.variables) - set(roles.w) - set(roles.z_star) - {step.b}
    return out


def apply_tbf(
    p: Kernel,
    step: OpStep,
    g_full: CausalGraph,
    mode: str = "declared",
    *,
    model=None,
    tol: float = 1e-8,
) -> Kernel:
    """Treatment-bridge step: solve for q, emit p(O, W~, X || S, b)."""
    if step.k != "Tbf":
        raise ValueError(f"apply_tbf got a {step.k} step")
    report = check_preconditions(step, p, None, g_full, mode, model=model, tol=tol)
    if not report.passed:
        _raise_for(report)
    gm = materialize_bidirected(g_full)
    roles = _bridge_roles(step, p, p, gm)
    pieces = _tbf_pieces(p, roles, tol)
    sol = solve_bridge(pieces.problem, tol=tol)
    out_vars = gm.vset(set(roles.o) | set(roles.w_tilde) | set(roles.x))
    out = _emit(pieces, sol, out_vars, p.context + (step.b,), p.cards)
    assert set(out.variables) == set(p.variables) - set(roles.z) - set(roles.w_star) - {step.b}
    return out


def apply_ebf(
    p: Kernel,
    step: OpStep,
    g_full: CausalGraph,
    mode: str = "declared",
    *,
    model=None,
    tol: float = 1e-8,
    route: str = "auto",
) -> Kernel:
    """Extended-bridge step: emit the joint p(O, W~, Z~, X || S, b).

    Tries the outcome-side system first and falls back to the treatment
    side; pass route="outcome" or "treatment" to force one.
    """
    if step.k != "Ebf":
        raise ValueError(f"apply_ebf got a {step.k} step")
    if route not in ("auto", "outcome", "treatment"):
        raise ValueError(f"unknown route {route!r}")
    report = check_preconditions(step, p, None, g_full, mode, model=model, tol=tol)
    if not report.passed:
        _raise_for(report)
    gm = materialize_bidirected(g_full)
    roles = _bridge_roles(step, p, p, gm)
    if route == "auto":
        chosen = report.route or "outcome"
        # with a model the viable route is pre-validated; declared mode
        # discovers it at solve time
        fall_back = mode == "declared" and chosen == "outcome"
    else:
        chosen, fall_back = route, False
    if chosen == "treatment":
        value = _positivity_value(p, roles.b, roles.w, roles.x)
        if value <= DIV_FLOOR:
            raise PositivityViolation(
                f"treatment route needs p({roles.b} | {_fmt(roles.w + roles.x)}) > 0"
            )
        pieces = _ebf_pieces(p, roles, tol, "treatment")
        sol = solve_bridge(pieces.problem, tol=tol)
    else:
        pieces = _ebf_pieces(p, roles, tol, "outcome")
        try:
            sol = solve_bridge(pieces.problem, tol=tol)
        except NoSolutionError as err:
            if not fall_back:
                raise
            value = _positivity_value(p, roles.b, roles.w, roles.x)
            if value <= DIV_FLOOR:
                raise PositivityViolation(
                    f"outcome route unsolvable (residual {err.residual:.3e}) and the "
                    f"treatment route needs p({roles.b} | {_fmt(roles.w + roles.x)}) > 0"
                ) from err
            pieces = _ebf_pieces(p, roles, tol, "treatment")
            try:
                sol = solve_bridge(pieces.problem, tol=tol)
            except NoSolutionError as err2:
                raise NoSolutionError(
                    "extended bridge unsolvable via either route (outcome residual "
                    f"{err.residual:.3e}, treatment residual {err2.residual:.3e})",
                    min(err.residual, err2.residual),
                    tol,
                ) from err2
    if sol.problem.out_slot:
        # any extended solution must marginalize to a standard-equation
        # solution; the summed residual scales with the slot size at worst
        reduced = marginalize_extended(sol)
        n_slot = len(sol.problem.out_slot)
        slot_states = int(np.prod(sol.problem.row_shape[len(sol.problem.row_shape) - n_slot:]))
        assert reduced.residual <= slot_states * tol + 1e-12
    out_vars = gm.vset(
        set(roles.o) | set(roles.w_tilde) | set(roles.z_tilde) | set(roles.x)
    )
    out = _emit(pieces, sol, out_vars, p.context + (step.b,), p.cards)
    assert (
        set(out.variables)
        == set(p.variables) - set(roles.w_star) - set(roles.z_star) - {step.b}
    )
    return out
