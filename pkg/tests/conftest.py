import itertools

import numpy as np
import pytest

from tmgraph import Store, Tensor, TypeSchema, ValueDictionary


def ticking_clock(start=1_700_000_000_000_000_000):
    counter = itertools.count(start)
    return lambda: next(counter)


@pytest.fixture
def store():
    return Store(seed=7, clock=ticking_clock())


@pytest.fixture
def face_store(store):
    store.register_schema(TypeSchema("Face", {"embedding": ValueDictionary.tensor([4])}))
    return store


def tensor(*xs):
    return Tensor(np.array(xs, dtype=np.float64))
