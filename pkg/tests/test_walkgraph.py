import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from frameless.topology import full_topology
from frameless.walkgraph import (
    GuardError,
    PatternDag,
    RetrievabilityTable,
    build_retrievability_table,
    companion_order,
    compute_w_coop,
    load_or_build_tables,
    load_table,
    pattern_mass,
    pattern_states,
    save_table,
)
from conftest import random_topology

# appendix group convention: positions 0..6 are
# {1},{2},{3},{1,2},{2,3},{1,3},{1,2,3}
APPENDIX_MASKS = [0b001, 0b010, 0b100, 0b011, 0b110, 0b101, 0b111]


def appendix_m3():
    from frameless.topology import GroupSpec, NetworkTopology

    return NetworkTopology(
        num_bs=3, groups=tuple(GroupSpec(m, 10) for m in APPENDIX_MASKS)
    )


def pattern_index(states, target, num_groups):
    comps = companion_order(num_groups, target)
    idx = 0
    for c in comps:
        idx = idx * 3 + states[c]
    return idx


def test_single_collided_packet_rescued():
    # u1 and u7 hold one un-retrieved packet each, u2 collides, rest silent:
    # u7 is a singleton at BS 3, peels, then u1 becomes a singleton at BS 1.
    topo = appendix_m3()
    table = build_retrievability_table(topo, target=0)
    states = [1, 2, 0, 0, 0, 0, 1]
    k = pattern_index(states, 0, 7)
    assert table.retrievable[k]
    assert not table.singleton[k]  # rescued from a collision, not collision-free


def test_all_silent_companions_retrievable():
    topo = appendix_m3()
    table = build_retrievability_table(topo, target=0)
    k = pattern_index([1, 0, 0, 0, 0, 0, 0], 0, 7)
    assert table.retrievable[k]
    assert table.singleton[k]


def test_all_neighbors_collided_blocked():
    # every group sharing a BS with the target is in state 2
    topo = appendix_m3()
    table = build_retrievability_table(topo, target=0)
    # target u1 at BS1; groups at BS1: u4={1,2}, u6={1,3}, u7={1,2,3}
    states = [1, 0, 0, 2, 0, 2, 2]
    assert not table.retrievable[pattern_index(states, 0, 7)]


def test_triple_group_never_rescued():
    # the all-BS group can only be retrieved collision-free
    topo = appendix_m3()
    table = build_retrievability_table(topo, target=6)
    assert not table.rescue.any()


def test_guard_on_too_many_groups():
    import frameless.walkgraph as wg

    class Fake:
        num_groups = wg.MAX_GROUPS + 1

    with pytest.raises(GuardError):
        build_retrievability_table(Fake(), 0)


def test_table_shape_and_chunking():
    topo = full_topology(2, [5, 5, 5])
    t_serial = build_retrievability_table(topo, 0, workers=1)
    t_parallel = build_retrievability_table(topo, 0, workers=2)
    assert len(t_serial.retrievable) == 9
    assert np.array_equal(t_serial.retrievable, t_parallel.retrievable)
    assert np.array_equal(t_serial.singleton, t_parallel.singleton)


def test_cache_roundtrip(tmp_path):
    topo = full_topology(2, [5, 5, 5])
    table = build_retrievability_table(topo, 1)
    save_table(table, topo, cache_dir=tmp_path)
    loaded = load_table(topo, 1, cache_dir=tmp_path)
    assert loaded is not None
    assert np.array_equal(loaded.retrievable, table.retrievable)
    assert np.array_equal(loaded.singleton, table.singleton)
    # counts don't invalidate the cache; connectivity does
    other_counts = full_topology(2, [9, 9, 9])
    assert load_table(other_counts, 1, cache_dir=tmp_path) is not None
    other_struct = full_topology(2, [5, 5, 0])
    tables = load_or_build_tables(other_struct, cache_dir=tmp_path)
    assert set(tables) == {0, 1, 2}


def test_compute_w_trivial_cases():
    topo = full_topology(2, [5, 5, 5])
    tables = load_or_build_tables(topo, persist=False)
    ones = np.ones(3)
    zeros = np.zeros(3)
    # everyone retrieved/silent: only the all-zero companion pattern has
    # mass and it is always retrievable, so w = 0
    assert compute_w_coop(topo, tables, ones, zeros, ones, 0) == 0.0
    # target never the sole survivor of its own group: w = 1
    assert compute_w_coop(topo, tables, ones, zeros, zeros, 0) == 1.0


def test_pattern_mass_closure_simple():
    topo = full_topology(2, [5, 5, 5])
    rng = np.random.default_rng(0)
    r = rng.random(3)
    c = rng.random(3) * (1 - r)
    assert pattern_mass(topo, 0, r, c) == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=15)
@given(seed=st.integers(0, 10**6))
def test_pattern_mass_closure_random(seed):
    rng = np.random.default_rng(seed)
    topo = random_topology(rng)
    n = topo.num_groups
    r = rng.random(n)
    c = rng.random(n) * (1 - r)
    target = int(rng.integers(n))
    assert pattern_mass(topo, target, r, c) == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=15)
@given(seed=st.integers(0, 10**6))
def test_dag_matches_direct_sum(seed):
    rng = np.random.default_rng(seed)
    topo = random_topology(rng)
    n = topo.num_groups
    target = int(rng.integers(n))
    table = build_retrievability_table(topo, target)
    r = rng.random(n)
    c = rng.random(n) * (1 - r)
    v = np.stack([r, c, 1 - r - c])
    for mask in (table.retrievable, table.singleton, table.rescue):
        dag = PatternDag(mask, companion_order(n, target))
        direct = pattern_mass(topo, target, r, c, mask=mask)
        assert dag.evaluate(v) == pytest.approx(direct, abs=1e-12)


def test_dag_batch_evaluation():
    topo = full_topology(2, [4, 4, 4])
    table = build_retrievability_table(topo, 2)
    dag = PatternDag(table.retrievable, companion_order(3, 2))
    rng = np.random.default_rng(3)
    r = rng.random((3, 5))
    c = rng.random((3, 5)) * (1 - r)
    v = np.stack([r, c, 1 - r - c])  # (3, I, batch)
    batched = dag.evaluate(v)
    for b in range(5):
        assert batched[b] == pytest.approx(dag.evaluate(v[:, :, b]), abs=1e-12)


def test_pattern_states_mixed_radix():
    states = pattern_states(3, 1, 0, 9)
    # companions are groups 0 and 2; group 0 is the most significant digit
    assert states[0].tolist() == [0, 1, 0]
    assert states[1].tolist() == [0, 1, 1]
    assert states[3].tolist() == [1, 1, 0]
    assert states[8].tolist() == [2, 1, 2]


def test_rc_sum_above_one_rejected():
    topo = full_topology(2, [5, 5, 5])
    tables = load_or_build_tables(topo, persist=False)
    with pytest.raises(ValueError, match="exceeds 1"):
        compute_w_coop(topo, tables, np.ones(3), np.ones(3) * 0.5, np.ones(3), 0)


def test_table_validates_length():
    with pytest.raises(ValueError):
        RetrievabilityTable(0, 3, np.zeros(5, bool), np.zeros(5, bool))
