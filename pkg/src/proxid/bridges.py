"""Discrete bridge equations as families of per-context linear systems.

A bridge function is a table X satisfying X @ A = B in every context, where
A stacks the conditional distribution of the operator variables given the
probe variables and B stacks the context's right-hand side. Solutions use
minimum-norm least squares; the square invertible case admits a direct
inverse for cross-checking.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import NoSolutionError

KINDS = ("outcome", "treatment", "extended_outcome", "extended_treatment")

COND_LIMIT = 1e8
RANK_TOL = 1e-8


@dataclass(frozen=True)
class BridgeProblem:
    """X @ operator[c] = rhs[c] for every context index c.

    operator: (n_ctx, n_op, n_probe); each column is a conditional
    distribution of the operator variables at one probe state.
    rhs: (n_ctx, n_rows, n_probe).
    Row variables list the bridge's output arguments; for extended kinds the
    trailing `out_slot` names are the joint-output slot that marginalization
    removes.
    """

    kind: str
    operator: np.ndarray
    rhs: np.ndarray
    row_vars: tuple[str, ...] = ()
    op_vars: tuple[str, ...] = ()
    probe_vars: tuple[str, ...] = ()
    ctx_vars: tuple[str, ...] = ()
    out_slot: tuple[str, ...] = ()
    row_shape: tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown bridge kind {self.kind!r}")
        if self.operator.ndim != 3 or self.rhs.ndim != 3:
            raise ValueError("operator and rhs must be (ctx, rows, probes) stacks")
        if self.operator.shape[0] != self.rhs.shape[0]:
            raise ValueError("operator and rhs disagree on context count")
        if self.operator.shape[2] != self.rhs.shape[2]:
            raise ValueError("operator and rhs disagree on probe count")
        col_sums = self.operator.sum(axis=1)
        if not np.allclose(col_sums, 1.0, atol=1e-10):
            raise ValueError("operator columns must be conditional distributions")


@dataclass
class BridgeSolution:
    problem: BridgeProblem
    values: np.ndarray  # (n_ctx, n_rows, n_op)
    residual: float
    conds: np.ndarray
    ranks: np.ndarray
    ill_conditioned: bool
    method: str

    def plug_in_residual(self) -> float:
        """Recompute the max equation violation from scratch."""
        return _residual(self.values, self.problem.operator, self.problem.rhs)


def _residual(values: np.ndarray, operator: np.ndarray, rhs: np.ndarray) -> float:
    return float(np.max(np.abs(np.einsum("crw,cwz->crz", values, operator) - rhs)))


def solve_bridge(
    problem: BridgeProblem, tol: float = 1e-8, method: str = "lstsq"
) -> BridgeSolution:
    """Solve every context's system; NoSolutionError if any residual exceeds tol."""
    a, b = problem.operator, problem.rhs
    n_ctx, n_op, _ = a.shape
    n_rows = b.shape[1]
    values = np.empty((n_ctx, n_rows, n_op))
    conds = np.empty(n_ctx)
    ranks = np.empty(n_ctx, dtype=int)
    for c in range(n_ctx):
        ac, bc = a[c], b[c]
        sv = np.linalg.svd(ac, compute_uv=False)
        smax = sv[0] if sv.size else 0.0
        smin = sv[-1] if sv.size else 0.0
        conds[c] = np.inf if smin == 0.0 else smax / smin
        ranks[c] = int(np.sum(sv > RANK_TOL * smax)) if smax > 0 else 0
        if method == "inverse":
            if ac.shape[0] != ac.shape[1]:
                raise ValueError("inverse method needs a square operator")
            values[c] = bc @ np.linalg.inv(ac)
        elif method == "lstsq":
            values[c] = np.linalg.lstsq(ac.T, bc.T, rcond=None)[0].T
        else:
            raise ValueError(f"unknown solve method {method!r}")
    residual = _residual(values, a, b)
    if residual > tol:
        raise NoSolutionError(f"{problem.kind} bridge equation unsolvable", residual, tol)
    return BridgeSolution(
        problem=problem,
        values=values,
        residual=residual,
        conds=conds,
        ranks=ranks,
        ill_conditioned=bool(np.any(conds > COND_LIMIT)),
        method=method,
    )


def marginalize_extended(sol: BridgeSolution) -> BridgeSolution:
    """Collapse an extended solution's joint-output slot.

    Summing the solved table over the output slot yields a solution of the
    corresponding standard bridge equation against the slot-summed right-hand
    side; the operator is untouched.
    """
    problem = sol.problem
    if problem.kind not in ("extended_outcome", "extended_treatment"):
        raise ValueError("only extended bridge solutions can be marginalized")
    if not problem.out_slot:
        raise ValueError("extended problem lacks an output slot")
    n_slot = len(problem.out_slot)
    keep_vars = problem.row_vars[: len(problem.row_vars) - n_slot]
    keep_shape = problem.row_shape[: len(problem.row_shape) - n_slot]
    slot_shape = problem.row_shape[len(keep_shape):]
    n_keep = int(np.prod(keep_shape)) if keep_shape else 1

    def collapse(stack: np.ndarray) -> np.ndarray:
        n_ctx, _, n_last = stack.shape
        shaped = stack.reshape(n_ctx, n_keep, int(np.prod(slot_shape)), n_last)
        return shaped.sum(axis=2)

    new_problem = replace(
        problem,
        kind="outcome" if problem.kind == "extended_outcome" else "treatment",
        rhs=collapse(problem.rhs),
        row_vars=keep_vars,
        out_slot=(),
        row_shape=keep_shape,
    )
    values = collapse(sol.values)
    return BridgeSolution(
        problem=new_problem,
        values=values,
        residual=_residual(values, new_problem.operator, new_problem.rhs),
        conds=sol.conds,
        ranks=sol.ranks,
        ill_conditioned=sol.ill_conditioned,
        method=sol.method,
    )


@dataclass
class CompletenessReport:
    complete: bool
    required_rank: int
    ranks: np.ndarray
    deficient_context: int | None = None
    witness: np.ndarray | None = None

    def witness_residual(self, matrices: np.ndarray) -> float:
        """How close the witness is to a genuine left-null vector."""
        if self.witness is None:
            raise ValueError("no witness recorded")
        return float(np.max(np.abs(self.witness @ matrices[self.deficient_context])))


def completeness_rank(matrices: np.ndarray, tol: float = RANK_TOL) -> CompletenessReport:
    """Full row rank of p(u | probe, ctx) stacks, with a null-vector witness.

    matrices: (n_ctx, n_u, n_probe). Complete iff every context has numerical
    row rank n_u; otherwise the first deficient context supplies a function
    g(u) with sum_u g(u) p(u | probe) = 0 for all probe states.
    """
    n_ctx, n_u, _ = matrices.shape
    ranks = np.empty(n_ctx, dtype=int)
    for c in range(n_ctx):
        u_vecs, sv, _ = np.linalg.svd(matrices[c])
        smax = sv[0] if sv.size else 0.0
        rank = int(np.sum(sv > tol * smax)) if smax > 0 else 0
        ranks[c] = rank
        if rank < n_u:
            # left null vector: combination of u-states invisible to the probes
            witness = u_vecs[:, rank] if rank < u_vecs.shape[1] else u_vecs[:, -1]
            return CompletenessReport(
                complete=False,
                required_rank=n_u,
                ranks=ranks[: c + 1],
                deficient_context=c,
                witness=witness,
            )
    return CompletenessReport(complete=True, required_rank=n_u, ranks=ranks)
