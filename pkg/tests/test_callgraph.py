import itertools
import random

import pytest
from hypothesis import given, settings, strategies as st

from ensemblefuzz.callgraph import (
    CallGraphError, compute_depths, deep_edges, deep_functions, parse_callgraph,
    parse_edge_id, parse_edge_map, parse_entries,
)


def chain():
    return parse_callgraph("main a\na b\nb c")


def test_parse_counts():
    g = chain()
    assert len(g.functions) == 4 and len(g.calls) == 3


def test_self_call_and_dedup():
    g = parse_callgraph("f f")
    assert g.functions == {"f"} and g.calls == {("f", "f")}
    assert len(parse_callgraph("x y\nx y").calls) == 1


def test_parse_errors():
    with pytest.raises(CallGraphError, match="line 2"):
        parse_callgraph("a b\na b c")
    with pytest.raises(CallGraphError, match="empty"):
        parse_callgraph("# nothing\n\n")
    with pytest.raises(CallGraphError):
        parse_callgraph("a b", entries=["zz"])


def test_chain_depths():
    d = compute_depths(chain())
    assert dict(d.depth) == {"main": 0, "a": 1, "b": 2, "c": 3}
    assert d.mean_depth == 1.5
    assert d.deep_threshold == pytest.approx(2.25)
    assert deep_functions(d) == {"c"}


def test_single_function():
    d = compute_depths(parse_callgraph("main"))
    assert dict(d.depth) == {"main": 0} and d.mean_depth == 0 and d.deep_threshold == 0
    assert deep_functions(d) == frozenset()


def test_diamond_shortest_path():
    d = compute_depths(parse_callgraph("main a\nmain b\na c\nb c"))
    assert d.depth["c"] == 2


def test_unreachable_is_deep():
    g = parse_callgraph("main a\nu", entries=["main"])
    d = compute_depths(g)
    assert d.depth["u"] is None
    assert "u" in deep_functions(d)


def test_no_entry():
    # every function is called by another one
    with pytest.raises(CallGraphError, match="no entry"):
        compute_depths(parse_callgraph("a b\nb a"))


def test_self_call_does_not_hide_entry():
    d = compute_depths(parse_callgraph("main main\nmain a"))
    assert d.depth == {"main": 0, "a": 1}


def test_edge_map_and_deep_edges():
    owners = parse_edge_map("# id fn\n1 main\n0x10 c\n7 ghost\n")
    assert owners == {1: "main", 16: "c", 7: "ghost"}
    assert deep_edges(compute_depths(chain()), owners) == {16, 7}


def test_edge_ids():
    assert parse_edge_id("0xff") == 255
    with pytest.raises(ValueError):
        parse_edge_id(str(2**64))
    with pytest.raises(CallGraphError):
        parse_edge_map("1 a b")
    assert parse_entries("main\n# c\nalt\n") == {"main", "alt"}


# -- brute-force oracle over all simple call paths ------------------------

def all_paths_depths(functions, calls, roots):
    """Shortest call-path length by enumerating every simple path."""
    succ = {f: [b for a, b in calls if a == f] for f in functions}
    best = {f: None for f in functions}

    def walk(f, length, seen):
        if best[f] is None or length < best[f]:
            best[f] = length
        for g in succ[f]:
            if g not in seen:
                walk(g, length + 1, seen | {g})

    for r in roots:
        walk(r, 0, {r})
    return best


def oracle_deep(functions, calls, roots, rho=1.5):
    depth = all_paths_depths(functions, calls, roots)
    reached = [d for d in depth.values() if d is not None]
    threshold = rho * sum(reached) / len(reached)
    return {f for f, d in depth.items() if d is None or d > threshold}


def random_graph(rng, n_max=12):
    n = rng.randint(1, n_max)
    fns = [f"f{i}" for i in range(n)]
    calls = {(a, b) for a, b in itertools.product(fns, fns) if rng.random() < 0.18}
    return fns, calls


@pytest.mark.parametrize("seed", range(20))
def test_against_all_paths_oracle(seed):
    rng = random.Random(seed)
    fns, calls = random_graph(rng)
    text = "\n".join(fns + [f"{a} {b}" for a, b in sorted(calls)])
    g = parse_callgraph(text, entries=["f0"])
    d = compute_depths(g)
    assert deep_functions(d) == oracle_deep(fns, calls, ["f0"])


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 9), st.sets(st.tuples(st.integers(0, 8), st.integers(0, 8)), max_size=20),
       st.floats(0.5, 3.0))
def test_deep_set_property(n, raw_calls, rho):
    fns = [f"f{i}" for i in range(n)]
    calls = {(fns[a], fns[b]) for a, b in raw_calls if a < n and b < n}
    g = parse_callgraph("\n".join(fns + [f"{a} {b}" for a, b in sorted(calls)]), ["f0"])
    d = compute_depths(g, rho)
    assert deep_functions(d) == oracle_deep(fns, calls, ["f0"], rho)
    assert d.depth["f0"] == 0
