"""Exact discrete causal models: joints, truncated factorization, sampling.

Ground truth for every identification result. All inference is dense and
exact; a hard state-space cap keeps tables at desk scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .errors import ModelError, StateSpaceError, ZeroMassError
from .graphs import CausalGraph, materialize_bidirected
from .kernels import Kernel, contract

STATE_CAP = 10**7
DEFAULT_FLOOR = 1e-3
ROW_ATOL = 1e-12


@dataclass(eq=False)
class DiscreteModel:
    """CPT factorization over a DAG (bidirected edges already materialized)."""

    graph: CausalGraph
    cards: Mapping[str, int]
    cpts: Mapping[str, np.ndarray]  # axes: parents in vertex order, then the vertex

    def __post_init__(self):
        if self.graph.bidirected:
            raise ModelError("materialize bidirected edges before building a model")
        if self.graph.context:
            raise ModelError("models are defined over graphs without context")
        space = 1
        for v in self.graph.vertices:
            card = self.cards.get(v)
            if not isinstance(card, int) or card < 2:
                raise ModelError(f"vertex {v} needs an integer cardinality >= 2")
            space *= card
        if space > STATE_CAP:
            raise StateSpaceError(f"joint state space {space} exceeds {STATE_CAP}")
        cpts = {}
        for v in self.graph.vertices:
            if v not in self.cpts:
                raise ModelError(f"missing CPT for {v}")
            pa = self.graph.parents((v,))
            want = tuple(self.cards[p] for p in pa) + (self.cards[v],)
            table = np.asarray(self.cpts[v], dtype=float)
            if table.shape != want:
                raise ModelError(
                    f"CPT for {v} has shape {table.shape}, expected {want}"
                )
            if table.min() < 0:
                raise ModelError(f"CPT for {v} has negative entries")
            if not np.allclose(table.sum(axis=-1), 1.0, atol=ROW_ATOL):
                raise ModelError(f"CPT rows for {v} do not sum to 1")
            table = table.copy()
            table.setflags(write=False)
            cpts[v] = table
        object.__setattr__(self, "cpts", cpts)

    # -- ground truth --------------------------------------------------------

    def min_entry(self) -> float:
        return min(float(t.min()) for t in self.cpts.values())

    def _factor(self, v: str) -> tuple[tuple[str, ...], np.ndarray]:
        return self.graph.parents((v,)) + (v,), self.cpts[v]

    def joint(self) -> Kernel:
        """Exact p over every vertex, latent ones included."""
        factors = [self._factor(v) for v in self.graph.vertices]
        probs = contract(factors, self.graph.vertices)
        return Kernel(self.graph.vertices, (), self.cards, probs)

    def observed_joint(self, provenance=None) -> Kernel:
        obs = self.graph.observed
        factors = [self._factor(v) for v in self.graph.vertices]
        probs = contract(factors, obs)
        return Kernel(obs, (), self.cards, probs, provenance)

    def g_formula(self, assignment: Mapping[str, int]) -> Kernel:
        """Truncated factorization: drop intervened CPTs, pin their values."""
        for v, s in assignment.items():
            self.graph.index(v)
            if not 0 <= int(s) < self.cards[v]:
                raise ModelError(f"state {s} out of range for {v}")
        remaining = tuple(v for v in self.graph.vertices if v not in assignment)
        factors = []
        for v in remaining:
            names, table = self._factor(v)
            idx = tuple(
                assignment[n] if n in assignment else slice(None) for n in names
            )
            kept = tuple(n for n in names if n not in assignment)
            factors.append((kept, table[idx]))
        if not remaining:
            return Kernel((), (), self.cards, np.array(1.0))
        probs = contract(factors, remaining)
        return Kernel(remaining, (), self.cards, probs)

    def interventional(
        self, keep: Iterable[str], targets: Iterable[str]
    ) -> Kernel:
        """Oracle kernel p(keep || targets): g-formula per target state."""
        keep_t = self.graph.vset(keep)
        targets_t = self.graph.vset(targets)
        if set(keep_t) & set(targets_t):
            raise ModelError("keep and targets overlap")
        t_shape = tuple(self.cards[t] for t in targets_t)
        out = np.empty(tuple(self.cards[v] for v in keep_t) + t_shape)
        for idx in np.ndindex(*t_shape) if t_shape else [()]:
            assignment = dict(zip(targets_t, idx))
            sliced = self.g_formula(assignment)
            probs = contract([sliced.table()], keep_t)
            out[(Ellipsis,) + idx] = probs
        return Kernel(keep_t, targets_t, self.cards, out)

    def ci_residual(
        self, x: Iterable[str], y: Iterable[str], z: Iterable[str] = ()
    ) -> float:
        """max over states of |p(x,y|z) - p(x|z) p(y|z)|, zero-mass z skipped."""
        xs, ys, zs = (self.graph.vset(s) for s in (x, y, z))
        if set(xs) & set(ys) or set(xs) & set(zs) or set(ys) & set(zs):
            raise ModelError("ci_residual arguments must be disjoint")
        joint = self.joint().table()
        pz = contract([joint], zs)
        pxyz = contract([joint], xs + ys + zs)
        pxz = contract([joint], xs + zs)
        pyz = contract([joint], ys + zs)
        nx, ny, nz = len(xs), len(ys), len(zs)
        mask = pz > 1e-15
        with np.errstate(divide="ignore", invalid="ignore"):
            safe_z = np.where(mask, pz, 1.0)
            lhs = pxyz / safe_z.reshape((1,) * (nx + ny) + pz.shape)
            rhs = (pxz / safe_z.reshape((1,) * nx + pz.shape)).reshape(
                pxz.shape[:nx] + (1,) * ny + pz.shape
            ) * (pyz / safe_z.reshape((1,) * ny + pz.shape)).reshape(
                (1,) * nx + pyz.shape
            )
        diff = np.abs(lhs - rhs)
        diff = diff * mask.reshape((1,) * (nx + ny) + pz.shape)
        return float(diff.max()) if diff.size else 0.0

    def sample(self, n: int, seed: int) -> dict[str, np.ndarray]:
        """Ancestral sampling; returns one integer column per vertex."""
        rng = np.random.default_rng(seed)
        order = _topological(self.graph)
        cols: dict[str, np.ndarray] = {}
        for v in order:
            pa = self.graph.parents((v,))
            table = self.cpts[v]
            if not pa:
                cols[v] = rng.choice(self.cards[v], size=n, p=table)
                continue
            rows = table[tuple(cols[p] for p in pa)]
            u = rng.random((n, 1))
            cols[v] = (rows.cumsum(axis=1) < u).sum(axis=1)
        return cols


def _topological(g: CausalGraph) -> list[str]:
    indeg = {v: len(g._pa[v]) for v in g.vertices}
    ready = [v for v in g.vertices if indeg[v] == 0]
    out = []
    while ready:
        v = ready.pop(0)
        out.append(v)
        for c in sorted(g._ch[v], key=g.index):
            indeg[c] -= 1
            if indeg[c] == 0:
                ready.append(c)
    return out


def random_model(
    g: CausalGraph,
    cards: Mapping[str, int] | None = None,
    seed: int = 0,
    floor: float = DEFAULT_FLOOR,
) -> DiscreteModel:
    """Dirichlet CPTs with a hard entry floor; bidirected edges materialized.

    Rows are floor + (1 - k*floor) * Dirichlet(1,..,1), so the minimum entry
    is at least `floor` by construction and rows sum to 1 exactly.
    """
    gm = materialize_bidirected(g)
    full_cards = {v: 2 for v in gm.vertices}
    if cards:
        full_cards.update({v: int(c) for v, c in cards.items() if v in gm._index})
    rng = np.random.default_rng(seed)
    cpts = {}
    for v in gm.vertices:
        pa = gm.parents((v,))
        k = full_cards[v]
        if floor * k >= 1.0:
            raise ModelError(f"floor {floor} too large for cardinality {k}")
        rows = int(np.prod([full_cards[p] for p in pa])) if pa else 1
        draws = rng.dirichlet(np.ones(k), size=rows)
        table = floor + (1.0 - k * floor) * draws
        shape = tuple(full_cards[p] for p in pa) + (k,)
        cpts[v] = table.reshape(shape)
    return DiscreteModel(gm, full_cards, cpts)
