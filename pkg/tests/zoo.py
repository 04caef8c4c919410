"""Shared example graphs used across the test suite."""

from proxid.graphs import CausalGraph


def fig1a():
    # plain backdoor triangle
    return CausalGraph(
        vertices=("X", "A", "Y"),
        directed=frozenset({("X", "A"), ("X", "Y"), ("A", "Y")}),
    )


def fig1c():
    # backdoor triangle with an unobserved A-Y confounder
    return CausalGraph(
        vertices=("X", "U", "A", "Y"),
        directed=frozenset(
            {("X", "A"), ("X", "Y"), ("A", "Y"), ("U", "A"), ("U", "Y")}
        ),
        latent=frozenset({"U"}),
    )


def fig1d():
    # proxy setup: treatment proxy Z, outcome proxy W, shared latent U
    return CausalGraph(
        vertices=("X", "U", "Z", "W", "A", "Y"),
        directed=frozenset(
            {
                ("U", "Z"),
                ("U", "W"),
                ("U", "A"),
                ("U", "Y"),
                ("X", "A"),
                ("X", "Y"),
                ("Z", "A"),
                ("W", "Y"),
                ("A", "Y"),
            }
        ),
        latent=frozenset({"U"}),
    )


def fig3a():
    # mediator M added to the proxy setup; A causes Z here
    return CausalGraph(
        vertices=("X", "U", "W", "A", "M", "Z", "Y"),
        directed=frozenset(
            {
                ("U", "A"),
                ("U", "W"),
                ("U", "Z"),
                ("U", "Y"),
                ("U", "X"),
                ("X", "A"),
                ("X", "Y"),
                ("W", "M"),
                ("W", "Y"),
                ("A", "M"),
                ("A", "Y"),
                ("A", "Z"),
                ("M", "Y"),
                ("M", "Z"),
            }
        ),
        latent=frozenset({"U"}),
    )


def fig4b():
    # mediator variant where the outcome proxy W descends from M
    return CausalGraph(
        vertices=("X", "U", "Z", "A", "M", "W", "Y"),
        directed=frozenset(
            {
                ("U", "A"),
                ("U", "W"),
                ("U", "Z"),
                ("U", "Y"),
                ("X", "A"),
                ("X", "Y"),
                ("Z", "A"),
                ("Z", "M"),
                ("A", "M"),
                ("A", "Y"),
                ("M", "W"),
                ("M", "Y"),
            }
        ),
        latent=frozenset({"U"}),
    )


def fig4e():
    # both proxies feed the mediator; Z stays pre-treatment
    return CausalGraph(
        vertices=("X", "U", "Z", "W", "A", "M", "Y"),
        directed=frozenset(
            {
                ("U", "A"),
                ("U", "W"),
                ("U", "Z"),
                ("U", "Y"),
                ("U", "X"),
                ("X", "A"),
                ("X", "Y"),
                ("Z", "A"),
                ("Z", "M"),
                ("W", "M"),
                ("W", "Y"),
                ("A", "M"),
                ("A", "Y"),
                ("M", "Y"),
            }
        ),
        latent=frozenset({"U"}),
    )


def bow():
    return CausalGraph(
        vertices=("A", "Y"),
        directed=frozenset({("A", "Y")}),
        bidirected=frozenset({("A", "Y")}),
    )


def chain():
    return CausalGraph(
        vertices=("A", "M", "Y"),
        directed=frozenset({("A", "M"), ("M", "Y")}),
    )


def front_door():
    return CausalGraph(
        vertices=("A", "M", "Y"),
        directed=frozenset({("A", "M"), ("M", "Y")}),
        bidirected=frozenset({("A", "Y")}),
    )


def collider():
    return CausalGraph(
        vertices=("A", "B", "C"),
        directed=frozenset({("A", "C"), ("B", "C")}),
    )
