"""Graph primitives against brute-force path-enumeration oracles."""

import itertools

import pytest
from hypothesis import given, settings, strategies as st

import zoo
from proxid.errors import GraphError
from proxid.graphs import (
    CausalGraph,
    cadmg,
    d_separated,
    district_of,
    districts,
    fixability_witness,
    fixable,
    kinship,
    latent_project,
    markov_blanket,
    materialize_bidirected,
    swig,
)


# ---------------------------------------------------------------------------
# path-enumeration oracles (deliberately naive, exponential, tiny graphs only)


def _adjacent(g, v):
    """Edges at v as (other endpoint, arrowhead at v, arrowhead at other)."""
    out = []
    for c in sorted(g._ch[v]):
        out.append((c, False, True))
    for p in sorted(g._pa[v]):
        out.append((p, True, False))
    for s in sorted(g._sib[v]):
        out.append((s, True, True))
    return out


def dsep_oracle(g, xs, ys, zs):
    """m-separation by checking every simple path directly."""
    cond = set(zs) | set(g.context)
    anc_cond = set(g.ancestors(cond))
    ys = set(ys)

    def search(v, head_in, path):
        for n, head_v, head_n in _adjacent(g, v):
            if n in path:
                continue
            if head_in is not None:
                collider = head_in and head_v
                if collider and v not in anc_cond:
                    continue
                if not collider and v in cond:
                    continue
            if n in ys:
                return True
            if search(n, head_n, path + [n]):
                return True
        return False

    for x in xs:
        if search(x, None, [x]):
            return False
    return True


def directed_edge_oracle(g, u, w, kset):
    """Directed path u..w whose interior avoids kept vertices."""

    def dfs(v, path):
        for c in g._ch[v]:
            if c in path:
                continue
            if c == w:
                return True
            if c in kset:
                continue
            if dfs(c, path + [c]):
                return True
        return False

    return dfs(u, [u])


def bidirected_edge_oracle(g, u, w, kset):
    """Arrowhead-to-arrowhead path whose interior is dropped non-colliders."""

    def dfs(v, head_in, path):
        for n, head_v, head_n in _adjacent(g, v):
            if n in path:
                continue
            if head_in is None:
                if not head_v:
                    continue  # first edge needs an arrowhead at u
            elif head_in and head_v:
                continue  # interior collider
            if n == w:
                if head_n:
                    return True
                continue
            if n in kset:
                continue
            if dfs(n, head_n, path + [n]):
                return True
        return False

    return dfs(u, None, [u])


def project_oracle(g, keep):
    kset = set(keep)
    directed = set()
    bidirected = set()
    for u, w in itertools.permutations(keep, 2):
        if directed_edge_oracle(g, u, w, kset):
            directed.add((u, w))
        if g.index(u) < g.index(w) and bidirected_edge_oracle(g, u, w, kset):
            bidirected.add((u, w))
    return directed, bidirected


# ---------------------------------------------------------------------------
# random graph strategies


@st.composite
def admgs(draw, max_vertices=6):
    n = draw(st.integers(min_value=2, max_value=max_vertices))
    names = tuple(f"V{i}" for i in range(n))
    directed = set()
    bidirected = set()
    for i, j in itertools.combinations(range(n), 2):
        kind = draw(st.sampled_from(("none", "none", "dir", "bi", "both")))
        if kind in ("dir", "both"):
            directed.add((names[i], names[j]))
        if kind in ("bi", "both"):
            bidirected.add((names[i], names[j]))
    return CausalGraph(names, frozenset(directed), frozenset(bidirected))


@st.composite
def admg_with_ci_query(draw):
    g = draw(admgs())
    pool = list(g.vertices)
    picks = draw(
        st.lists(st.sampled_from(pool), min_size=2, max_size=min(5, len(pool)), unique=True)
    )
    x, y = picks[0], picks[1]
    z = picks[2:]
    return g, (x,), (y,), tuple(z)


# ---------------------------------------------------------------------------
# kinship


def test_kinship_chain():
    g = zoo.chain()
    assert kinship(g, ("A",), "descendants") == ("A", "M", "Y")
    assert g.descendants(("A",)) == ("A", "M", "Y")


def test_ancestors_of_empty_set():
    assert zoo.fig1d().ancestors(()) == ()


def test_fig3a_descendants_of_mediator():
    assert zoo.fig3a().descendants(("M",)) == ("M", "Z", "Y")


def test_descendants_reflexive():
    g = zoo.fig1d()
    for v in g.vertices:
        assert v in g.descendants((v,))
        assert v in g.ancestors((v,))


def test_parents_children_not_reflexive():
    g = zoo.chain()
    assert g.parents(("M",)) == ("A",)
    assert g.children(("M",)) == ("Y",)


def test_kinship_unknown_vertex():
    with pytest.raises(GraphError):
        zoo.chain().descendants(("Q",))
    with pytest.raises(GraphError):
        kinship(zoo.chain(), ("A",), "cousins")


# ---------------------------------------------------------------------------
# construction and validation


def test_cycle_rejected():
    with pytest.raises(GraphError):
        CausalGraph(("A", "B"), frozenset({("A", "B"), ("B", "A")}))


def test_self_loop_rejected():
    with pytest.raises(GraphError):
        CausalGraph(("A",), frozenset({("A", "A")}))
    with pytest.raises(GraphError):
        CausalGraph(("A",), bidirected=frozenset({("A", "A")}))


def test_context_in_edges_rejected():
    with pytest.raises(GraphError):
        CausalGraph(
            ("A", "B"), frozenset({("A", "B")}), context=frozenset({"B"})
        )
    with pytest.raises(GraphError):
        CausalGraph(
            ("A", "B"), bidirected=frozenset({("A", "B")}), context=frozenset({"B"})
        )


def test_unknown_edge_endpoint_rejected():
    with pytest.raises(GraphError):
        CausalGraph(("A",), frozenset({("A", "B")}))


def test_duplicate_vertices_rejected():
    with pytest.raises(GraphError):
        CausalGraph(("A", "A"))


def test_latent_context_overlap_rejected():
    with pytest.raises(GraphError):
        CausalGraph(("A",), latent=frozenset({"A"}), context=frozenset({"A"}))


def test_bidirected_normalized():
    g = CausalGraph(("A", "B"), bidirected=frozenset({("B", "A")}))
    assert g.bidirected == frozenset({("A", "B")})


# ---------------------------------------------------------------------------
# d-separation


def test_dsep_direct_edge():
    assert not d_separated(zoo.fig1a(), ("A",), ("Y",), ())


def test_dsep_collider():
    g = zoo.collider()
    assert d_separated(g, ("A",), ("B",), ())
    assert not d_separated(g, ("A",), ("B",), ("C",))


def test_dsep_fig1d_outcome_proxy():
    assert d_separated(zoo.fig1d(), ("W",), ("Z", "A"), ("U", "X"))


def test_dsep_overlapping_sets_rejected():
    with pytest.raises(GraphError):
        d_separated(zoo.chain(), ("A",), ("A",), ())


def test_dsep_context_endpoint_rejected():
    g = swig(zoo.fig1a(), ("A",))
    with pytest.raises(GraphError):
        d_separated(g, ("A@a",), ("Y",), ())


@settings(max_examples=150, deadline=None)
@given(admg_with_ci_query())
def test_dsep_matches_path_oracle(case):
    g, x, y, z = case
    assert d_separated(g, x, y, z) == dsep_oracle(g, x, y, z)


@settings(max_examples=60, deadline=None)
@given(admg_with_ci_query())
def test_dsep_symmetric(case):
    g, x, y, z = case
    assert d_separated(g, x, y, z) == d_separated(g, y, x, z)


def test_materialize_bidirected_roundtrip():
    g = zoo.front_door()
    gm = materialize_bidirected(g)
    assert not gm.bidirected
    assert "&A.Y" in gm.latent
    assert ("&A.Y", "A") in gm.directed and ("&A.Y", "Y") in gm.directed


# ---------------------------------------------------------------------------
# node splitting


def test_swig_empty_is_identity():
    g = zoo.fig1d()
    assert swig(g, ()) is g


def test_swig_structure():
    g = swig(zoo.fig1d(), ("A",))
    assert "A@a" in g.vertices
    assert "A@a" in g.context
    assert ("A@a", "Y") in g.directed
    assert ("A", "Y") not in g.directed
    assert ("U", "A") in g.directed  # random half keeps incoming


def test_swig_fig1a_backdoor():
    g = swig(zoo.fig1a(), ("A",))
    assert d_separated(g, ("Y",), ("A",), ("X",))
    assert not d_separated(g, ("Y",), ("A",), ())


def test_swig_fig1d_latent_ignorability():
    g = swig(zoo.fig1d(), ("A",))
    assert d_separated(g, ("Y",), ("A",), ("U", "X"))
    assert not d_separated(g, ("Y",), ("A",), ("X",))


def test_swig_split_context_rejected():
    g = swig(zoo.fig1a(), ("A",))
    with pytest.raises(GraphError):
        swig(g, ("A@a",))


# ---------------------------------------------------------------------------
# latent projection


def test_project_identity():
    g = zoo.fig1d()
    p = latent_project(g, g.vertices)
    assert p.directed == g.directed and p.bidirected == g.bidirected


def test_project_chain():
    g = CausalGraph(("A", "L", "Y"), frozenset({("A", "L"), ("L", "Y")}))
    p = latent_project(g, ("A", "Y"))
    assert p.directed == frozenset({("A", "Y")})
    assert not p.bidirected


def test_project_fig1d():
    g = zoo.fig1d()
    p = latent_project(g, g.observed)
    confounded = {"Z", "W", "A", "Y"}
    expected_bi = {
        tuple(sorted(pair, key=g.index))
        for pair in itertools.combinations(confounded, 2)
    }
    assert p.bidirected == frozenset(expected_bi)
    assert p.directed == frozenset(
        {("X", "A"), ("X", "Y"), ("Z", "A"), ("W", "Y"), ("A", "Y")}
    )
    assert not p.latent


def test_project_drop_context_rejected():
    g = cadmg(zoo.fig1a(), ("Y", "X"), ("A",))
    with pytest.raises(GraphError):
        latent_project(g, ("Y", "X"))


@settings(max_examples=100, deadline=None)
@given(admgs(), st.data())
def test_project_matches_path_oracle(g, data):
    keep = data.draw(
        st.lists(st.sampled_from(list(g.vertices)), min_size=1, unique=True)
    )
    keep = g.vset(keep)
    p = latent_project(g, keep)
    directed, bidirected = project_oracle(g, keep)
    assert p.directed == frozenset(directed)
    assert p.bidirected == frozenset(bidirected)


@settings(max_examples=100, deadline=None)
@given(admgs(), st.data())
def test_project_composition(g, data):
    outer = data.draw(
        st.lists(st.sampled_from(list(g.vertices)), min_size=1, unique=True)
    )
    inner = data.draw(st.lists(st.sampled_from(outer), min_size=1, unique=True))
    two_step = latent_project(latent_project(g, outer), inner)
    one_step = latent_project(g, inner)
    assert two_step == one_step


# ---------------------------------------------------------------------------
# districts


def test_districts_singletons_without_bidirected():
    g = zoo.chain()
    assert districts(g) == [("A",), ("M",), ("Y",)]


def test_districts_fig1d():
    g = latent_project(zoo.fig1d(), zoo.fig1d().observed)
    assert districts(g) == [("X",), ("Z", "W", "A", "Y")]
    assert district_of(g, "A") == ("Z", "W", "A", "Y")


def test_districts_require_projection():
    with pytest.raises(GraphError):
        districts(zoo.fig1d())


@settings(max_examples=100, deadline=None)
@given(admgs())
def test_district_partition(g):
    parts = districts(g)
    flat = [v for part in parts for v in part]
    assert sorted(flat) == sorted(g.random_vertices)
    assert len(set(flat)) == len(flat)
    for part in parts:
        # internally bidirected-connected
        comp = district_of(g, part[0])
        assert comp == part
    for p1, p2 in itertools.combinations(parts, 2):
        for a in p1:
            assert not (g._sib[a] & set(p2))


# ---------------------------------------------------------------------------
# kernel graphs, fixability, blankets


def test_cadmg_empty_context_is_projection():
    g = zoo.fig1d()
    assert cadmg(g, g.observed, ()) == latent_project(g, g.observed)


def test_cadmg_fig3a_mediator_context():
    g = cadmg(zoo.fig3a(), ("Y", "A", "W", "Z", "X"), ("M",))
    assert g.context == frozenset({"M"})
    assert ("M", "Y") in g.directed and ("M", "Z") in g.directed
    assert not g.parents(("M",))
    assert not any("M" in e for e in g.bidirected)


def test_cadmg_bow_keeps_outgoing():
    g = cadmg(zoo.bow(), ("Y",), ("A",))
    assert ("A", "Y") in g.directed
    assert not g.bidirected


def test_cadmg_overlap_rejected():
    with pytest.raises(GraphError):
        cadmg(zoo.bow(), ("A", "Y"), ("A",))


def test_fixable_bow():
    g = zoo.bow()
    assert not fixable(g, "A")
    assert fixability_witness(g, "A") == ("Y",)
    assert fixable(g, "Y")


def test_fixable_dag_everywhere():
    g = zoo.fig1a()
    assert all(fixable(g, v) for v in g.vertices)


def test_fixable_fig3a_mediator():
    g = latent_project(zoo.fig3a(), zoo.fig3a().observed)
    assert fixable(g, "M")
    assert not fixable(g, "A")


def test_markov_blanket_fig3a():
    g = latent_project(zoo.fig3a(), zoo.fig3a().observed)
    assert markov_blanket(g, "M") == ("W", "A")


def test_markov_blanket_excludes_context():
    g = cadmg(zoo.fig3a(), ("Y", "A", "W", "Z", "X"), ("M",))
    blanket = markov_blanket(g, "A")
    assert "M" not in blanket


# ---------------------------------------------------------------------------
# fig reconstruction sanity: the worked-example structure the engine relies on


def test_fig3a_district_structure():
    g_obs = latent_project(zoo.fig3a(), zoo.fig3a().observed)
    ystar = ("X", "W", "M", "Y")  # ancestors of Y avoiding A
    sub = g_obs.subgraph(ystar)
    assert districts(sub) == [("X", "W", "Y"), ("M",)]


def test_fig4e_district_structure():
    g_obs = latent_project(zoo.fig4e(), zoo.fig4e().observed)
    ystar = ("X", "Z", "W", "M", "Y")
    sub = g_obs.subgraph(ystar)
    assert districts(sub) == [("X", "Z", "W", "Y"), ("M",)]
