"""Mixed causal graphs and graph-side primitives.

One immutable type covers every role: hidden-variable DAG, ADMG obtained by
latent projection, CADMG (graph with context vertices), and single-world
intervention graph after node splitting. Operations never mutate; they build
new graphs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from .errors import GraphError

Edge = tuple[str, str]

_RELATIONS = ("parents", "children", "ancestors", "descendants")


def split_name(v: str) -> str:
    """Name of the context half created when v is split."""
    return f"{v}@{v.lower()}"


@dataclass(frozen=True)
class CausalGraph:
    """Acyclic mixed graph with optional latent and context vertices.

    vertices are kept in declaration order; every operation that returns a
    vertex collection orders it by this sequence, so downstream iteration is
    deterministic.
    """

    vertices: tuple[str, ...]
    directed: frozenset[Edge] = frozenset()
    bidirected: frozenset[Edge] = frozenset()
    latent: frozenset[str] = frozenset()
    context: frozenset[str] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "vertices", tuple(self.vertices))
        index = {v: i for i, v in enumerate(self.vertices)}
        if len(index) != len(self.vertices):
            raise GraphError("duplicate vertex names")
        object.__setattr__(self, "_index", index)

        for group, name in ((self.latent, "latent"), (self.context, "context")):
            for v in group:
                if v not in index:
                    raise GraphError(f"{name} vertex {v!r} is not declared")
        if self.latent & self.context:
            raise GraphError("latent and context vertices overlap")

        directed = frozenset((str(a), str(b)) for a, b in self.directed)
        for a, b in directed:
            if a not in index or b not in index:
                raise GraphError(f"edge {a}->{b} references unknown vertex")
            if a == b:
                raise GraphError(f"self loop on {a}")
            if b in self.context:
                raise GraphError(f"context vertex {b} has incoming edge from {a}")
        object.__setattr__(self, "directed", directed)

        # normalize unordered pairs to (lower index, higher index)
        bi = set()
        for a, b in self.bidirected:
            if a not in index or b not in index:
                raise GraphError(f"edge {a}<->{b} references unknown vertex")
            if a == b:
                raise GraphError(f"self loop on {a}")
            if a in self.context or b in self.context:
                raise GraphError(f"bidirected edge touches context vertex: {a}<->{b}")
            bi.add((a, b) if index[a] < index[b] else (b, a))
        object.__setattr__(self, "bidirected", frozenset(bi))

        pa = {v: set() for v in self.vertices}
        ch = {v: set() for v in self.vertices}
        sib = {v: set() for v in self.vertices}
        for a, b in directed:
            pa[b].add(a)
            ch[a].add(b)
        for a, b in bi:
            sib[a].add(b)
            sib[b].add(a)
        object.__setattr__(self, "_pa", pa)
        object.__setattr__(self, "_ch", ch)
        object.__setattr__(self, "_sib", sib)

        # Kahn: the directed part must be acyclic
        indeg = {v: len(pa[v]) for v in self.vertices}
        queue = [v for v in self.vertices if indeg[v] == 0]
        seen = 0
        while queue:
            v = queue.pop()
            seen += 1
            for c in ch[v]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    queue.append(c)
        if seen != len(self.vertices):
            raise GraphError("directed part is cyclic")

    # -- vertex bookkeeping ------------------------------------------------

    def index(self, v: str) -> int:
        try:
            return self._index[v]
        except KeyError:
            raise GraphError(f"unknown vertex {v!r}") from None

    def vset(self, names: Iterable[str]) -> tuple[str, ...]:
        """Canonical ordered tuple for a collection of vertex names."""
        return tuple(sorted(set(names), key=self.index))

    @property
    def random_vertices(self) -> tuple[str, ...]:
        return tuple(v for v in self.vertices if v not in self.context)

    @property
    def observed(self) -> tuple[str, ...]:
        return tuple(
            v for v in self.vertices if v not in self.latent and v not in self.context
        )

    # -- kinship -----------------------------------------------------------

    def parents(self, s: Iterable[str]) -> tuple[str, ...]:
        out = set()
        for v in self.vset(s):
            out |= self._pa[v]
        return self.vset(out)

    def children(self, s: Iterable[str]) -> tuple[str, ...]:
        out = set()
        for v in self.vset(s):
            out |= self._ch[v]
        return self.vset(out)

    def ancestors(self, s: Iterable[str]) -> tuple[str, ...]:
        return self._closure(s, self._pa)

    def descendants(self, s: Iterable[str]) -> tuple[str, ...]:
        return self._closure(s, self._ch)

    def siblings(self, s: Iterable[str]) -> tuple[str, ...]:
        out = set()
        for v in self.vset(s):
            out |= self._sib[v]
        return self.vset(out)

    def _closure(self, s: Iterable[str], step: dict) -> tuple[str, ...]:
        # reflexive: the input set is always included
        out = set(self.vset(s))
        stack = list(out)
        while stack:
            v = stack.pop()
            for n in step[v]:
                if n not in out:
                    out.add(n)
                    stack.append(n)
        return self.vset(out)

    # -- derived graphs ----------------------------------------------------

    def subgraph(self, keep: Iterable[str]) -> "CausalGraph":
        """Induced subgraph: keeps edges with both endpoints retained."""
        keep_t = self.vset(keep)
        kset = set(keep_t)
        return CausalGraph(
            vertices=keep_t,
            directed=frozenset(e for e in self.directed if e[0] in kset and e[1] in kset),
            bidirected=frozenset(
                e for e in self.bidirected if e[0] in kset and e[1] in kset
            ),
            latent=self.latent & kset,
            context=self.context & kset,
        )


def kinship(g: CausalGraph, s: Iterable[str], relation: str) -> tuple[str, ...]:
    if relation not in _RELATIONS:
        raise GraphError(f"unknown kinship relation {relation!r}")
    return getattr(g, relation)(s)


def materialize_bidirected(g: CausalGraph) -> CausalGraph:
    """Replace each bidirected edge with a fresh latent common parent."""
    if not g.bidirected:
        return g
    fresh = []
    directed = set(g.directed)
    for a, b in sorted(g.bidirected, key=lambda e: (g.index(e[0]), g.index(e[1]))):
        name = f"&{a}.{b}"
        fresh.append(name)
        directed.add((name, a))
        directed.add((name, b))
    return CausalGraph(
        vertices=g.vertices + tuple(fresh),
        directed=frozenset(directed),
        bidirected=frozenset(),
        latent=g.latent | set(fresh),
        context=g.context,
    )


def d_separated(
    g: CausalGraph,
    x: Iterable[str],
    y: Iterable[str],
    z: Iterable[str] = (),
) -> bool:
    """Standard d-separation with context vertices always conditioned.

    Bidirected edges are expanded to explicit latent common parents first, so
    a single DAG routine covers ADMGs and intervention graphs alike.
    """
    xs, ys, zs = set(x), set(y), set(z)
    for v in xs | ys | zs:
        g.index(v)
    if xs & ys or xs & zs or ys & zs:
        raise GraphError("d-separation arguments must be pairwise disjoint")
    if (xs | ys) & g.context:
        raise GraphError("context vertices cannot appear as d-separation endpoints")

    gm = materialize_bidirected(g)
    cond = zs | set(g.context)
    anc = set(gm.ancestors(cond))

    # reachable-by-active-trails walk over (vertex, entry direction) states
    visited = set()
    stack = [(v, "child") for v in xs]  # as if entered from a child: both ways open
    while stack:
        state = stack.pop()
        if state in visited:
            continue
        visited.add(state)
        v, entered_from = state
        if v in ys and v not in cond:
            return False
        if entered_from == "child":
            if v not in cond:
                for p in gm._pa[v]:
                    stack.append((p, "child"))
                for c in gm._ch[v]:
                    stack.append((c, "parent"))
        else:  # entered along an edge from a parent
            if v not in cond:
                for c in gm._ch[v]:
                    stack.append((c, "parent"))
            if v in anc:
                # collider open: v is (an ancestor of) a conditioned vertex
                for p in gm._pa[v]:
                    stack.append((p, "child"))
    return True


def swig(g: CausalGraph, a: Iterable[str]) -> CausalGraph:
    """Split each vertex of `a` into a random half and a context half.

    The random half keeps the original name and all incoming edges; the
    context half takes the outgoing directed edges. d-separation among the
    random halves (context is auto-conditioned) reads off single-world
    counterfactual independences.
    """
    a_t = g.vset(a)
    if set(a_t) & g.context:
        raise GraphError("cannot split a context vertex")
    if not a_t:
        return g
    a_set = set(a_t)
    vertices = []
    for v in g.vertices:
        vertices.append(v)
        if v in a_set:
            vertices.append(split_name(v))
    directed = frozenset(
        (split_name(s) if s in a_set else s, t) for s, t in g.directed
    )
    return CausalGraph(
        vertices=tuple(vertices),
        directed=directed,
        bidirected=g.bidirected,
        latent=g.latent,
        context=g.context | {split_name(v) for v in a_t},
    )


def latent_project(g: CausalGraph, keep: Iterable[str]) -> CausalGraph:
    """Project out every vertex not in `keep`, per the ADMG projection rules.

    Directed u->w: a directed path from u to w through dropped vertices only.
    Bidirected u<->w: a path whose end edges carry arrowheads at u and w and
    whose interior vertices are all dropped non-colliders.
    """
    keep_t = g.vset(keep)
    kset = set(keep_t)
    if not g.context <= kset:
        raise GraphError("latent projection cannot drop context vertices")

    new_directed = set()
    new_bidirected = set()
    for u in keep_t:
        # forward reachability through dropped vertices
        seen = set()
        stack = list(g._ch[u])
        while stack:
            v = stack.pop()
            if v in seen:
                continue
            seen.add(v)
            if v in kset:
                new_directed.add((u, v))
            else:
                stack.extend(g._ch[v])

        # arrowhead-to-arrowhead walk; state = (vertex, arrived at an arrowhead)
        seen = set()
        stack = [(p, False) for p in g._pa[u]]
        stack += [(s, True) for s in g._sib[u]]
        while stack:
            state = stack.pop()
            if state in seen:
                continue
            seen.add(state)
            v, head = state
            if v in kset:
                if head and v != u:
                    new_bidirected.add((u, v))
                continue
            # dropped interior vertex must be a non-collider on the path
            for c in g._ch[v]:
                stack.append((c, True))
            if not head:
                for p in g._pa[v]:
                    stack.append((p, False))
                for s in g._sib[v]:
                    stack.append((s, True))
    return CausalGraph(
        vertices=keep_t,
        directed=frozenset(new_directed),
        bidirected=frozenset(
            (a, b) for a, b in new_bidirected if g.index(a) < g.index(b)
        ),
        latent=g.latent & kset,
        context=g.context,
    )


def districts(g: CausalGraph) -> list[tuple[str, ...]]:
    """Partition of the random vertices into bidirected-connected components."""
    if g.latent:
        raise GraphError("districts are defined on projected graphs only")
    out = []
    assigned = set()
    for v in g.random_vertices:
        if v in assigned:
            continue
        comp = _bidirected_component(g, v)
        assigned |= set(comp)
        out.append(comp)
    return out


def district_of(g: CausalGraph, b: str) -> tuple[str, ...]:
    if g.latent:
        raise GraphError("districts are defined on projected graphs only")
    if b in g.context:
        raise GraphError(f"{b} is a context vertex")
    g.index(b)
    return _bidirected_component(g, b)


def _bidirected_component(g: CausalGraph, v: str) -> tuple[str, ...]:
    comp = {v}
    stack = [v]
    while stack:
        u = stack.pop()
        for s in g._sib[u]:
            if s not in comp:
                comp.add(s)
                stack.append(s)
    return g.vset(comp)


def cadmg(g_full: CausalGraph, r: Iterable[str], s: Iterable[str]) -> CausalGraph:
    """Graph of the kernel p(R || S): project onto R ∪ S, then sever S.

    All incoming directed and bidirected edges into S are removed and S
    becomes the context set.
    """
    r_t, s_t = g_full.vset(r), g_full.vset(s)
    r_set, s_set = set(r_t), set(s_t)
    if r_set & s_set:
        raise GraphError("kernel random and context sets overlap")
    proj = latent_project(g_full, r_set | s_set)
    return CausalGraph(
        vertices=proj.vertices,
        directed=frozenset(e for e in proj.directed if e[1] not in s_set),
        bidirected=frozenset(
            e for e in proj.bidirected if e[0] not in s_set and e[1] not in s_set
        ),
        latent=proj.latent,
        context=(proj.context | s_set),
    )


def fixable(g: CausalGraph, b: str) -> bool:
    """True iff b's district meets b's descendants in {b} alone."""
    if b in g.context:
        raise GraphError(f"{b} is a context vertex")
    dis = set(district_of(g, b))
    de = set(g.descendants([b]))
    return dis & de == {b}


def fixability_witness(g: CausalGraph, b: str) -> tuple[str, ...]:
    """The vertices beyond b shared by dis(b) and de(b); empty iff fixable."""
    dis = set(district_of(g, b))
    de = set(g.descendants([b]))
    return g.vset((dis & de) - {b})


def markov_blanket(g: CausalGraph, b: str) -> tuple[str, ...]:
    """dis(b) with its parents, minus b and the context vertices."""
    dis = district_of(g, b)
    blanket = set(dis) | set(g.parents(dis))
    return g.vset(blanket - {b} - g.context)
