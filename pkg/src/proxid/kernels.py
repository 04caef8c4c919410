"""Kernels p(R || S) as dense tables with named axes, and their algebra.

probs stores one axis per random variable followed by one axis per context
variable, in the order the tuples list them. A context-free kernel doubles as
a plain joint table. Tables are immutable; operations return new kernels.
"""

from __future__ import annotations

import string
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .errors import FixNotApplicable, GraphError, ModelError, ZeroMassError
from .graphs import CausalGraph, cadmg, fixability_witness, fixable, markov_blanket

NORM_ATOL = 1e-10
DIV_FLOOR = 1e-12


# ---------------------------------------------------------------------------
# named-array helpers shared by kernel ops, bridge assembly, and expression
# evaluation; a "table" is a (names, ndarray) pair with one axis per name


def _letters(names: Iterable[str]) -> dict[str, str]:
    alphabet = string.ascii_letters
    mapping = {}
    for name in names:
        if name not in mapping:
            if len(mapping) >= len(alphabet):
                raise ModelError("too many distinct axes for einsum contraction")
            mapping[name] = alphabet[len(mapping)]
    return mapping


def contract(
    factors: list[tuple[tuple[str, ...], np.ndarray]],
    output: tuple[str, ...],
) -> np.ndarray:
    """Multiply name-aligned tables and sum out every axis not in output."""
    letters = _letters([n for names, _ in factors for n in names] + list(output))
    spec = ",".join("".join(letters[n] for n in names) for names, _ in factors)
    spec += "->" + "".join(letters[n] for n in output)
    return np.einsum(spec, *[arr for _, arr in factors])


def table_sum(names, arr, bound) -> tuple[tuple[str, ...], np.ndarray]:
    bound = set(bound)
    keep = tuple(n for n in names if n not in bound)
    if len(keep) == len(names):
        return tuple(names), arr
    return keep, contract([(tuple(names), arr)], keep)


def table_ratio(num, den) -> tuple[tuple[str, ...], np.ndarray]:
    """num / den aligned by name; den axes absent from num are appended."""
    num_names, num_arr = num
    den_names, den_arr = den
    small = np.abs(den_arr) < DIV_FLOOR
    if np.any(small):
        state = np.argwhere(small)[0]
        desc = ", ".join(f"{n}={int(s)}" for n, s in zip(den_names, state))
        raise ZeroMassError(f"zero-mass state in division: {desc}", state=desc)
    extra = tuple(n for n in den_names if n not in num_names)
    out_names = tuple(num_names) + extra
    out_num = num_arr.reshape(num_arr.shape + (1,) * len(extra))
    if den_names:
        pos = {n: i for i, n in enumerate(out_names)}
        order = sorted(range(len(den_names)), key=lambda i: pos[den_names[i]])
        den_t = np.transpose(den_arr, order)
        shape = [1] * len(out_names)
        for p, size in zip(sorted(pos[n] for n in den_names), den_t.shape):
            shape[p] = size
        den_arr = den_t.reshape(shape)
    return out_names, out_num / den_arr


def table_slice(names, arr, assignment: Mapping[str, int]):
    keep_names = tuple(n for n in names if n not in assignment)
    idx = tuple(assignment.get(n, slice(None)) for n in names)
    return keep_names, arr[idx]


def table_relabel(names, mapping: Mapping[str, str]) -> tuple[str, ...]:
    renamed = tuple(mapping.get(n, n) for n in names)
    if len(set(renamed)) != len(renamed):
        raise ModelError("relabeling collapses distinct axes")
    return renamed


# ---------------------------------------------------------------------------


@dataclass(eq=False)
class Kernel:
    """p(R || S): a normalized table for every joint context state."""

    variables: tuple[str, ...]
    context: tuple[str, ...]
    cards: Mapping[str, int]
    probs: np.ndarray
    provenance: object | None = field(default=None, repr=False)

    def __post_init__(self):
        self.variables = tuple(self.variables)
        self.context = tuple(self.context)
        names = self.variables + self.context
        if len(set(names)) != len(names):
            raise ModelError("random and context variables must be distinct")
        expected = tuple(self.cards[v] for v in names)
        probs = np.asarray(self.probs, dtype=float)
        if probs.shape != expected:
            raise ModelError(
                f"kernel table shape {probs.shape} does not match {expected}"
            )
        if probs.size and float(probs.min()) < -NORM_ATOL:
            raise ModelError("kernel table has negative entries")
        sums = probs.sum(axis=tuple(range(len(self.variables))))
        if not np.allclose(sums, 1.0, atol=NORM_ATOL):
            worst = float(np.max(np.abs(sums - 1.0)))
            raise ModelError(
                f"kernel slices must sum to 1 per context state (off by {worst:.2e})"
            )
        probs = probs.copy()
        probs.setflags(write=False)
        self.probs = probs

    # -- bookkeeping --------------------------------------------------------

    @property
    def names(self) -> tuple[str, ...]:
        return self.variables + self.context

    def var(self) -> tuple[str, ...]:
        """Var(P) as used by the identification loop's coverage check."""
        return self.names

    def axis(self, name: str) -> int:
        return self.names.index(name)

    def table(self) -> tuple[tuple[str, ...], np.ndarray]:
        return self.names, self.probs

    def _order(self, names: Iterable[str]) -> tuple[str, ...]:
        pos = {n: i for i, n in enumerate(self.names)}
        return tuple(sorted(set(names), key=pos.__getitem__))

    # -- algebra ------------------------------------------------------------

    def marginal(self, keep: Iterable[str], provenance=None) -> "Kernel":
        keep_t = self._order(keep)
        if not set(keep_t) <= set(self.variables):
            raise ModelError("marginal keeps unknown or context variables")
        if keep_t == self.variables:
            return self
        out = contract([self.table()], keep_t + self.context)
        return Kernel(keep_t, self.context, self.cards, out, provenance)

    def condition(self, given: Iterable[str], provenance=None) -> "Kernel":
        """Move `given` from the random block into the context block."""
        given_t = self._order(given)
        if not set(given_t) <= set(self.variables):
            raise ModelError("conditioning variables must be random")
        keep = tuple(v for v in self.variables if v not in set(given_t))
        den_names = given_t + self.context
        den = contract([self.table()], den_names)
        target = keep + den_names
        num = contract([self.table()], target)
        _, ratio = table_ratio((target, num), (den_names, den))
        return Kernel(keep, given_t + self.context, self.cards, ratio, provenance)

    def slice_context(self, assignment: Mapping[str, int], provenance=None) -> "Kernel":
        if not set(assignment) <= set(self.context):
            raise ModelError("can only slice context variables")
        names, arr = table_slice(self.names, self.probs, assignment)
        context = tuple(c for c in self.context if c not in assignment)
        return Kernel(self.variables, context, self.cards, arr, provenance)

    def reorder_context(self, context: tuple[str, ...]) -> "Kernel":
        if set(context) != set(self.context):
            raise ModelError("context reorder must preserve the context set")
        out = contract([self.table()], self.variables + tuple(context))
        return Kernel(self.variables, tuple(context), self.cards, out, self.provenance)


def kernel_marginal(k: Kernel, keep: Iterable[str]) -> Kernel:
    return k.marginal(keep)


def kernel_condition(k: Kernel, given: Iterable[str]) -> Kernel:
    return k.condition(given)


def fix(k: Kernel, b: str, g_full: CausalGraph, provenance=None) -> Kernel:
    """Divide out p(b | mb(b) || S) and move b into the context block."""
    if b not in k.variables:
        raise ModelError(f"{b} is not a random variable of the kernel")
    graph = cadmg(g_full, k.variables, k.context)
    if not fixable(graph, b):
        raise FixNotApplicable(b, fixability_witness(graph, b))
    blanket = markov_blanket(graph, b)
    den_given = tuple(v for v in blanket if v in k.variables) + k.context
    num_names = (b,) + den_given
    num = contract([k.table()], num_names)
    den = contract([k.table()], den_given)
    _, conditional = table_ratio((num_names, num), (den_given, den))
    out_names, out = table_ratio((k.names, k.probs), (num_names, conditional))
    keep = tuple(v for v in k.variables if v != b)
    arr = contract([(out_names, out)], keep + k.context + (b,))
    return Kernel(keep, k.context + (b,), k.cards, arr, provenance)


def kernel_product(
    ks: list[Kernel], sum_over: Iterable[str], provenance=None
) -> Kernel:
    """Sum over `sum_over` of the name-aligned product of kernels."""
    bound = set(sum_over)
    randoms = set()
    for k in ks:
        randoms |= set(k.variables)
    all_names = []
    for k in ks:
        for n in k.names:
            if n not in all_names:
                all_names.append(n)
    if not bound <= set(all_names):
        raise ModelError("sum_over names missing from the factors")
    out_random = tuple(n for n in all_names if n in randoms and n not in bound)
    out_context = tuple(
        n for n in all_names if n not in randoms and n not in bound
    )
    cards: dict[str, int] = {}
    for k in ks:
        for n in k.names:
            card = k.cards[n]
            if cards.setdefault(n, card) != card:
                raise ModelError(f"factors disagree on the cardinality of {n}")
    arr = contract([k.table() for k in ks], out_random + out_context)
    return Kernel(out_random, out_context, cards, arr, provenance)
