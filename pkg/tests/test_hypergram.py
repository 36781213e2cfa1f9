import random
import threading

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tmgraph import CellKind, EntityId, EntityKind, HypergramCell, TopologyKind
from tmgraph.hypergram import HypergramError

CID = EntityId(EntityKind.VERTEX, 1, 1)


def test_scalar_sum_over_shards():
    cell = HypergramCell(CID, "scalar", shards=4)
    for i in range(100):
        cell.accumulate(1, shard=i % 4)
    assert cell.value == 0  # not visible before reconcile
    assert cell.reconcile() == 100


def test_histogram_bins():
    cell = HypergramCell(CID, CellKind.HISTOGRAM, shape=(2,))
    cell.accumulate([1, 0])
    cell.accumulate([0, 2])
    assert cell.reconcile().tolist() == [1, 2]
    with pytest.raises(HypergramError):
        cell.accumulate([-1, 0])


def test_shape_and_kind_errors():
    cell = HypergramCell(CID, "tensor", shape=(2, 2))
    with pytest.raises(HypergramError):
        cell.accumulate(np.ones(3))
    with pytest.raises(HypergramError):
        HypergramCell(CID, "scalar").accumulate([1, 2])
    with pytest.raises(HypergramError):
        HypergramCell(CID, "scalar", shards=0)
    with pytest.raises(HypergramError):
        HypergramCell(CID, "scalar", shards=2).accumulate(1, shard=2)


def test_fresh_cell_is_zero():
    assert HypergramCell(CID, "scalar").reconcile() == 0
    assert HypergramCell(CID, "tensor", shape=(3,)).reconcile().tolist() == [0, 0, 0]


def test_versioning_and_idempotence():
    cell = HypergramCell(CID, "scalar")
    cell.reconcile()
    assert cell.version == 0
    cell.accumulate(3)
    assert cell.reconcile() == 3 and cell.version == 1
    assert cell.reconcile() == 3 and cell.version == 1
    assert cell.value == 3
    cell.accumulate(0)
    cell.reconcile()
    assert cell.version == 2


def test_round_robin_without_hint():
    cell = HypergramCell(CID, "scalar", shards=3)
    assert [cell.accumulate(1) for _ in range(6)] == [0, 1, 2, 0, 1, 2]


def test_cached_value_is_a_copy():
    cell = HypergramCell(CID, "tensor", shape=(2,))
    cell.accumulate([1, 1])
    v = cell.reconcile()
    v[0] = 99
    assert cell.value.tolist() == [1, 1]


@given(st.lists(st.integers(-1000, 1000), max_size=60), st.randoms(), st.integers(1, 8))
def test_any_interleaving_same_value(deltas, rnd, shards):
    order = list(deltas)
    rnd.shuffle(order)
    cell = HypergramCell(CID, "scalar", shards=shards)
    for i, d in enumerate(order):
        cell.accumulate(d, shard=rnd.randrange(shards))
        if rnd.random() < 0.2:
            cell.reconcile()
    assert cell.reconcile() == sum(deltas)


def test_concurrent_writers_and_reconciler():
    cell = HypergramCell(CID, "tensor", shape=(4,), shards=8)
    per_writer = 2000
    rng = random.Random(3)
    deltas = [[np.array([rng.randint(0, 9) for _ in range(4)], float)
               for _ in range(per_writer)] for _ in range(4)]
    start = threading.Barrier(5)
    observed = []

    def write(ds):
        start.wait()
        for d in ds:
            cell.accumulate(d)

    def reconcile():
        start.wait()
        for _ in range(200):
            observed.append(cell.reconcile())

    threads = [threading.Thread(target=write, args=(ds,)) for ds in deltas]
    threads.append(threading.Thread(target=reconcile))
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    total = sum(d for ds in deltas for d in ds)
    assert cell.reconcile().tolist() == total.tolist()
    # intermediate reconciles only ever grow for nonnegative deltas
    for a, b in zip(observed, observed[1:]):
        assert np.all(a <= b)


# topology descriptor --------------------------------------------------------------

def test_grid_connectional_dimensionality(store):
    store.register_lattice("grid", TopologyKind.dense(3, 3))
    d = store.describe_topology("grid")
    assert d.connectional_dimensionality == 4
    assert d.density == 1.0
    assert d.metric_dimensionality == 2


def test_single_cell(store):
    store.register_lattice("one", TopologyKind.dense(1))
    d = store.describe_topology("one")
    assert (d.connectional_dimensionality, d.density) == (0, 0)


def test_fully_meshed_sparse(store):
    lat = store.register_lattice("mesh", TopologyKind.sparse(4), notes={"curvature": "flat"})
    for a in range(4):
        for b in range(4):
            if a != b:
                lat.link(a, b)
    d = store.describe_topology("mesh")
    assert (d.connectional_dimensionality, d.density) == (3, 1.0)
    assert d.notes == {"curvature": "flat"}
    lat2 = store.register_lattice("half", TopologyKind.sparse(4))
    lat2.link(0, 1)
    assert store.describe_topology("half").density == pytest.approx(1 / 12)


def test_unregistered_lattice(store):
    with pytest.raises(HypergramError):
        store.describe_topology("nope")
    store.register_lattice("g", TopologyKind.dense(2), cell_kind="histogram", shape=(3,))
    cell = store.cell("g", (1,))
    cell.accumulate([1, 2, 3])
    assert cell.reconcile().tolist() == [1, 2, 3]
    with pytest.raises(HypergramError):
        store.cell("g", (5,))
