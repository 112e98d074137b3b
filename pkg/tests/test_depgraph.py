"""Dependency graphs: extraction, closure statistics, plans, minimization."""

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from formalwiki.corpus import build_library, layered_sources, random_sources
from formalwiki.depgraph import (
    CycleDetected,
    DepGraph,
    FILE_LEVEL,
    ITEM_LEVEL,
    NotVerifiable,
    StatsReport,
    UnknownItem,
    compute_stats,
    export_graph,
    extract_file_graph,
    extract_item_graph,
    import_graph,
    minimize_environment,
    recompilation_plan,
    syntactic_environment,
    transitive_closure,
)

FIXTURE_EDGES = {
    ("calc#six", "nat#two"),
    ("calc#six", "nat#three"),
    ("calc#six_is_six", "calc#six"),
    ("calc#use", "calc#six"),
    ("calc#use", "nat#two"),
    ("calc#use", "nat#add_comm"),
    ("nat#add_comm", "nat#two"),
    ("nat#add_comm", "nat#three"),
}


def brute_closure(nodes, edges):
    """Reference transitive closure by repeated squaring of the edge set."""
    reach = set(edges)
    changed = True
    while changed:
        changed = False
        for a, b in list(reach):
            for c, d in list(reach):
                if b == c and (a, d) not in reach:
                    reach.add((a, d))
                    changed = True
    return reach


# --- extraction ---------------------------------------------------------------


def test_fixture_item_graph_exact(ref_library):
    g = extract_item_graph(ref_library)
    assert g.granularity == ITEM_LEVEL
    assert set(g.edges) == FIXTURE_EDGES
    assert len(g.nodes) == 6


def test_item_edges_subset_of_file_edges(ref_library):
    gi = extract_item_graph(ref_library)
    gf = extract_file_graph(ref_library)
    assert gf.granularity == FILE_LEVEL
    assert set(gi.edges) <= set(gf.edges)
    assert len(gf.edges) == 15


def test_file_graph_lifts_to_whole_articles(ref_library):
    gf = extract_file_graph(ref_library)
    # any item that touches nat depends on every nat item at file level
    assert ("calc#six", "nat#add_comm") in gf.edges
    assert ("calc#six", "nat#two") in gf.edges


def test_unanalyzable_library_is_not_verifiable():
    lib = build_library({"c": "def a := ghost;\n"})
    with pytest.raises(NotVerifiable):
        extract_item_graph(lib)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6))
def test_item_subset_file_on_generated_libraries(seed):
    lib = build_library(random_sources(random.Random(seed), n_articles=4, items_high=6))
    gi = extract_item_graph(lib)
    gf = extract_file_graph(lib)
    assert set(gi.edges) <= set(gf.edges)
    assert gi.nodes == gf.nodes


# --- closure and stats ------------------------------------------------------------


def test_fixture_stats(ref_library):
    s = compute_stats(extract_item_graph(ref_library))
    assert (s.items, s.deps, s.tdeps) == (6, 8, 11)
    assert s.arl == pytest.approx(11 / 6)
    assert s.p == pytest.approx(100 * 11 / (6 * 5 / 2))


def test_stats_from_raw_counts():
    s = StatsReport.from_counts(100, 990)
    assert s.items == 100 and s.tdeps == 990
    assert s.p == pytest.approx(100 * 990 / (100 * 99 / 2))
    assert s.arl == pytest.approx(9.9)


def test_transitive_closure_matches_brute_force_fixture(ref_library):
    g = extract_item_graph(ref_library)
    tc = transitive_closure(g)
    assert set(tc.edges) == brute_closure(g.nodes, g.edges)
    assert len(tc.edges) == 11


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6))
def test_transitive_closure_matches_brute_force_random(seed):
    rng = random.Random(seed)
    n = rng.randint(2, 12)
    nodes = [f"n{i}" for i in range(n)]
    edges = set()
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < 0.3:
                edges.add((nodes[j], nodes[i]))  # later depends on earlier: acyclic
    g = DepGraph(frozenset(nodes), frozenset(edges))
    tc = transitive_closure(g)
    assert set(tc.edges) == brute_closure(g.nodes, g.edges)
    s = compute_stats(g)
    assert s.tdeps == len(tc.edges)


def test_cycles_are_rejected():
    with pytest.raises(CycleDetected):
        DepGraph(frozenset({"a", "b"}), frozenset({("a", "b"), ("b", "a")}))


def test_edge_endpoints_must_be_nodes():
    with pytest.raises(ValueError):
        DepGraph(frozenset({"a"}), frozenset({("a", "ghost")}))


def test_topo_order_respects_edges(ref_library):
    g = extract_item_graph(ref_library)
    order = g.topo_order()
    position = {n: i for i, n in enumerate(order)}
    for a, b in g.edges:
        assert position[a] < position[b], (a, b)


# --- recompilation plans ------------------------------------------------------------


def test_plan_covers_changed_and_dependents(ref_library):
    g = extract_item_graph(ref_library)
    plan = recompilation_plan(g, ["calc#six"])
    assert plan.changed == {"calc#six"}
    assert plan.affected == {"calc#six", "calc#six_is_six", "calc#use"}


def test_plan_schedule_is_dependency_safe(ref_library):
    g = extract_item_graph(ref_library)
    plan = recompilation_plan(g, ["nat#two"])
    seen = set()
    for batch in plan.schedule:
        for iid in batch:
            for dep in g.dependees(iid):
                if dep in plan.affected:
                    assert dep in seen, (iid, dep)
        seen.update(batch)
    assert seen == plan.affected


def test_plan_unknown_item(ref_library):
    g = extract_item_graph(ref_library)
    with pytest.raises(UnknownItem):
        recompilation_plan(g, ["calc#ghost"])


def test_leaf_change_plans_only_itself(ref_library):
    g = extract_item_graph(ref_library)
    plan = recompilation_plan(g, ["calc#use"])
    assert plan.affected == {"calc#use"}
    assert plan.schedule == (("calc#use",),)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6))
def test_plan_soundness_on_generated_libraries(seed):
    rng = random.Random(seed)
    lib = build_library(random_sources(rng, n_articles=4, items_high=6))
    g = extract_item_graph(lib)
    ids = sorted(g.nodes)
    changed = rng.sample(ids, k=min(len(ids), rng.randint(1, 3)))
    plan = recompilation_plan(g, changed)
    # affected is exactly the reverse-reachable set
    rdeps = {n: set() for n in g.nodes}
    for a, b in g.edges:
        rdeps[b].add(a)
    expect = set()
    frontier = list(changed)
    while frontier:
        n = frontier.pop()
        if n in expect:
            continue
        expect.add(n)
        frontier.extend(rdeps[n])
    assert plan.affected == expect
    assert set().union(*plan.schedule) if plan.schedule else set() == plan.affected


# --- environment minimization ---------------------------------------------------


def test_minimize_fixture(ref_library):
    assert minimize_environment("calc#six_is_six", ref_library) == {
        "calc#six",
        "nat#two",
        "nat#three",
    }
    assert minimize_environment("nat#two", ref_library) == set()


def test_minimize_equals_syntactic_closure_fixture(ref_library):
    for iid in ref_library.item_ids():
        assert minimize_environment(iid, ref_library) == syntactic_environment(
            iid, ref_library
        ), iid


def test_minimize_unknown_item(ref_library):
    with pytest.raises(UnknownItem):
        minimize_environment("calc#ghost", ref_library)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6))
def test_minimize_equals_syntactic_closure_random(seed):
    rng = random.Random(seed)
    lib = build_library(random_sources(rng, n_articles=4, items_high=6))
    ids = sorted(lib.item_ids())
    for iid in rng.sample(ids, k=min(5, len(ids))):
        assert minimize_environment(iid, lib) == syntactic_environment(iid, lib), iid


# --- layered corpus shape --------------------------------------------------------


def test_layered_corpus_being_much_sparser_at_item_level():
    lib = build_library(layered_sources(random.Random(7), n_articles=12, items_per_article=8))
    gi = extract_item_graph(lib)
    gf = extract_file_graph(lib)
    assert len(gi.edges) < len(gf.edges)
    si, sf = compute_stats(gi), compute_stats(gf)
    assert si.arl < sf.arl


# --- serialization ------------------------------------------------------------


def test_export_import_roundtrip(ref_library):
    g = extract_item_graph(ref_library)
    again = import_graph(export_graph(g))
    assert again.nodes == g.nodes
    assert again.edges == g.edges
    assert again.granularity == g.granularity
