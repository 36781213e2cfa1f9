import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tmgraph import Store, Tensor, TypeSchema, ValueDictionary, VectorClock
from tmgraph.derive import (
    DerivationError,
    derive_all_happens_before,
    derive_comparison_edges,
    derive_happens_before,
)

from conftest import ticking_clock


def _event_store():
    s = Store(seed=3, clock=ticking_clock())
    s.register_schema(TypeSchema("Event", {"clock": ValueDictionary.composite(
        {p: ValueDictionary.scalar() for p in "pqrs"})}))
    return s


def test_dominating_clock_gives_edge():
    s = _event_store()
    a = s.add_vertex("Event", {"clock": {"p": 1, "q": 0}})
    b = s.add_vertex("Event", {"clock": {"p": 2, "q": 1}})
    eid = derive_happens_before(s, a, b)
    assert eid is not None
    e = s.get_edge(eid)
    assert (e.type_name, e.source, e.target) == ("HAPPENS_BEFORE", a, b)
    assert derive_happens_before(s, b, a) is None


def test_concurrent_and_equal_clocks_give_nothing():
    s = _event_store()
    a = s.add_vertex("Event", {"clock": {"p": 1, "q": 0}})
    b = s.add_vertex("Event", {"clock": {"p": 0, "q": 1}})
    c = s.add_vertex("Event", {"clock": {"p": 1, "q": 0}})
    assert derive_happens_before(s, a, b) is None
    assert derive_happens_before(s, b, a) is None
    assert derive_happens_before(s, a, c) is None
    assert not s.edges


def test_missing_clock_is_an_error():
    s = _event_store()
    a = s.add_vertex("Event", {"clock": {"p": 1}})
    b = s.add_vertex("Event", {})
    with pytest.raises(DerivationError):
        derive_happens_before(s, a, b)


def test_absent_process_counts_as_zero():
    assert VectorClock({"p": 1}).happens_before(VectorClock({"p": 1, "q": 1}))
    assert VectorClock({"p": 1}).concurrent_with(VectorClock({"q": 1}))


clocks = st.lists(st.dictionaries(st.sampled_from("pqrs"), st.integers(0, 3)),
                  min_size=1, max_size=8)


@settings(max_examples=60, deadline=None)
@given(clocks)
def test_happens_before_is_strict_partial_order(cs):
    s = _event_store()
    ids = [s.add_vertex("Event", {"clock": c}) for c in cs]
    derive_all_happens_before(s, ids)
    rel = {(e.source, e.target) for e in s.edges.values()}
    assert all((v, v) not in rel for v in ids)
    for a, b in rel:
        assert (b, a) not in rel
    for a, b, c in itertools.product(ids, repeat=3):
        if (a, b) in rel and (b, c) in rel:
            assert (a, c) in rel


# comparison templates ----------------------------------------------------------

@pytest.fixture
def thing_store(store):
    store.register_schema(TypeSchema("Thing", {
        "bbox": ValueDictionary.tensor([2, 3]),
        "height": ValueDictionary.scalar(),
        "name": ValueDictionary.string(),
        "group": ValueDictionary.string(),
        "member_of": ValueDictionary.string(),
    }))
    return store


def _box(lo, hi):
    # rows are the min and max corners
    return Tensor([[lo] * 3, [hi] * 3])


def test_spatial_contains(thing_store):
    a = thing_store.add_vertex("Thing", {"bbox": _box(0, 10)})
    b = thing_store.add_vertex("Thing", {"bbox": _box(2, 3)})
    eids = derive_comparison_edges(thing_store, [a, b], "SPATIALLY_CONTAINS")
    assert [(thing_store.get_edge(e).source, thing_store.get_edge(e).target) for e in eids] == [(a, b)]


def test_spatial_overlaps_is_symmetric(thing_store):
    a = thing_store.add_vertex("Thing", {"bbox": _box(0, 5)})
    b = thing_store.add_vertex("Thing", {"bbox": _box(5, 9)})
    c = thing_store.add_vertex("Thing", {"bbox": _box(20, 30)})
    eids = derive_comparison_edges(thing_store, [a, b, c], "SPATIALLY_OVERLAPS")
    pairs = {(thing_store.get_edge(e).source, thing_store.get_edge(e).target) for e in eids}
    assert pairs == {(a, b), (b, a)}


def test_bbox_required(thing_store):
    a = thing_store.add_vertex("Thing", {"height": 1})
    with pytest.raises(DerivationError):
        derive_comparison_edges(thing_store, [a], "SPATIALLY_CONTAINS")


def test_left_part_of(thing_store):
    whole = thing_store.add_vertex("Thing", {"bbox": _box(0, 10)})
    left = thing_store.add_vertex("Thing", {"bbox": Tensor([[1, 0, 0], [4, 10, 10]])})
    right = thing_store.add_vertex("Thing", {"bbox": Tensor([[6, 0, 0], [9, 10, 10]])})
    eids = derive_comparison_edges(thing_store, [whole, left, right], "IS_LEFT_PART_OF")
    pairs = [(thing_store.get_edge(e).source, thing_store.get_edge(e).target) for e in eids]
    assert pairs == [(left, whole)]


def test_larger_than_single_edge(thing_store):
    a = thing_store.add_vertex("Thing", {"height": 5})
    b = thing_store.add_vertex("Thing", {"height": 7})
    eids = derive_comparison_edges(thing_store, [a, b], "IS_LARGER_THAN_BY_height")
    assert len(eids) == 1
    e = thing_store.get_edge(eids[0])
    assert (e.source, e.target) == (b, a)


def _order_oracle(names):
    """Every pair (x, y) with x < y bytewise, plus its covering subset."""
    closure = {(x, y) for x in names for y in names if x.encode() < y.encode()}
    cover = {(x, y) for x, y in closure
             if not any((x, z) in closure and (z, y) in closure for z in names)}
    return closure, cover


def test_byte_order_chain_cover_and_closure(thing_store):
    ids = {n: thing_store.add_vertex("Thing", {"name": n}) for n in "bac"}
    closure, cover = _order_oracle(list(ids))
    params = {"attr": "name"}
    got = derive_comparison_edges(thing_store, ids.values(), "IS_SEQUENCED_AFTER_BY_byte_order", params)
    by_id = {v: k for k, v in ids.items()}
    as_names = lambda eids: {(by_id[thing_store.get_edge(e).source],
                              by_id[thing_store.get_edge(e).target]) for e in eids}
    assert as_names(got) == cover == {("a", "b"), ("b", "c")}
    got = derive_comparison_edges(thing_store, ids.values(), "IS_SEQUENCED_AFTER_BY_byte_order",
                                  dict(params, closure=True))
    assert as_names(got) == closure
    assert len(closure) == 3


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(-5, 5), min_size=1, max_size=7))
def test_numeric_order_matches_oracle(values):
    s = Store(seed=1, clock=ticking_clock())
    s.register_schema(TypeSchema("N", {"x": ValueDictionary.scalar()}))
    ids = [s.add_vertex("N", {"x": x}) for x in values]
    val = dict(zip(ids, values))
    eids = derive_comparison_edges(s, ids, "IS_SEQUENCED_AFTER_BY_numeric_order",
                                   {"attr": "x", "closure": True})
    got = {(s.get_edge(e).source, s.get_edge(e).target) for e in eids}
    assert got == {(a, b) for a in ids for b in ids if val[a] < val[b]}


def test_cyclic_comparator_rejected(thing_store):
    ids = [thing_store.add_vertex("Thing", {"height": h}) for h in range(3)]
    rps = lambda a, b: -1 if (b.attributes["height"] - a.attributes["height"]) % 3 == 1 else 1
    with pytest.raises(DerivationError):
        derive_comparison_edges(thing_store, ids, "IS_SEQUENCED_AFTER_BY_rps", {"comparator": rps})


def test_custom_comparator(thing_store):
    ids = [thing_store.add_vertex("Thing", {"height": h}) for h in (3, 1, 2)]
    by_height = lambda a, b: a.attributes["height"] - b.attributes["height"]
    eids = derive_comparison_edges(thing_store, ids, "IS_SEQUENCED_AFTER_BY_height",
                                   {"comparator": by_height})
    pairs = {(thing_store.get_edge(e).source, thing_store.get_edge(e).target) for e in eids}
    assert pairs == {(ids[1], ids[2]), (ids[2], ids[0])}


def test_membership_direction(thing_store):
    team = thing_store.add_vertex("Thing", {"group": "red"})
    ann = thing_store.add_vertex("Thing", {"member_of": "red"})
    bob = thing_store.add_vertex("Thing", {"member_of": "blue"})
    params = {"ref_key": "member_of", "match_key": "group"}
    eids = derive_comparison_edges(thing_store, [team, ann, bob], "BELONGS_TO", params)
    assert [(thing_store.get_edge(e).source, thing_store.get_edge(e).target) for e in eids] == [(ann, team)]
    eids = derive_comparison_edges(thing_store, [team, ann, bob], "OWNS", params)
    assert [(thing_store.get_edge(e).source, thing_store.get_edge(e).target) for e in eids] == [(team, ann)]


def test_unknown_template(thing_store):
    with pytest.raises(DerivationError):
        derive_comparison_edges(thing_store, [], "IS_NEAR")
