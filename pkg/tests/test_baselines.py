import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eventforest.baselines import (FifoPolicy, PolicyKind, PyramidPolicy, SimilarityMergePolicy, UniformPolicy,
                                   make_policy, policy_snapshot, policy_update, stride_sample)
from eventforest.fstw import Window, WindowConfig, make_node
from eventforest.pemf import PenaltyWeights

from conftest import node, tm


def equal_nodes(rng, count, n, d=3):
    return [node(rng.standard_normal((n, d)), [k + 1.0]) for k in range(count)]


def window_nodes(seed, frames=120, d=6):
    """Nodes emitted by a small window over a clustered random stream."""
    r = np.random.default_rng(seed)
    w = Window(WindowConfig(realtime_tokens=16, shortterm_frames=4, shortterm_tokens_per_frame=4))
    centers = r.standard_normal((frames // 8 + 1, d))
    out = []
    for k in range(frames):
        t = k + 1.0
        for x in w.ingest(tm(centers[k // 8] + 0.3 * r.standard_normal((16, d))), t):
            out.append((x, t))
    return out


def test_every_kind_has_a_policy():
    for kind in PolicyKind:
        assert make_policy(kind, 10).kind is kind
    with pytest.raises(ValueError):
        make_policy("lru", 10)


def test_fifo_keeps_newest_whole_nodes(rng):
    p = FifoPolicy(23)
    nodes = equal_nodes(rng, 12, 5)
    for x in nodes:
        policy_update(p, x, x.span[1])
    assert p.units == nodes[-(23 // 5):]


def test_fifo_trims_a_lone_oversized_node(rng):
    frames = [(tm(rng.standard_normal((4, 3))), float(t)) for t in (1, 2, 3, 4)]
    p = FifoPolicy(9)
    p.update(make_node(frames), 4.0)
    (kept,) = p.units
    assert kept.span == (3.0, 4.0) and kept.n == 8 and kept.timestamp == 3.5
    assert np.array_equal(kept.tokens.tokens, np.concatenate([frames[2][0].tokens, frames[3][0].tokens]))
    p = FifoPolicy(3)
    p.update(make_node(frames), 4.0)
    assert p.units[0].n == 3 and p.units[0].span == (4.0, 4.0)
    assert np.array_equal(p.units[0].tokens.tokens, frames[3][0].tokens[1:])


def test_fifo_snapshot_is_a_stream_suffix():
    for seed in range(5):
        stream = window_nodes(seed)
        p = FifoPolicy(40)
        for k, (x, t) in enumerate(stream):
            p.update(x, t)
            kept = [u.span for u in p.units]
            seen = [y.span for y, _ in stream[:k + 1]]
            assert kept == seen[len(seen) - len(kept):]
            snap = policy_snapshot(p)
            assert min(snap.timestamps) >= p.units[0].span[0]


def test_stride_sample_halves():
    x = tm(np.arange(16, dtype=float).reshape(8, 2) + 1)
    out = stride_sample(x, 2)
    assert out.n == 4 and out.tokens[:, 0].tolist() == [1, 5, 9, 13]


def test_uniform_doubles_stride_over_nodes(rng):
    p = UniformPolicy(40)
    nodes = equal_nodes(rng, 5, 10)
    for x in nodes[:4]:
        p.update(x, x.span[1])
    assert p.stride == 1 and p.token_count() == 40
    p.update(nodes[4], 5.0)
    assert p.stride == 2 and p.units == [nodes[0], nodes[2], nodes[4]]


def test_uniform_subsamples_tokens_of_a_lone_node(rng):
    p = UniformPolicy(5)
    p.update(node(rng.standard_normal((20, 3)), [1.0]), 1.0)
    assert len(p.units) == 1 and p.token_count() == 5


def test_pyramid_capacities_and_promotion(rng):
    p = PyramidPolicy(70)
    assert p.capacities == [40, 20, 10]
    frames = equal_nodes(rng, 40, 10)
    for x in frames:
        p.update(x, x.span[1])
    assert p.token_count() <= 70
    level0 = [f.timestamp for f in p.levels[0]]
    assert level0 == [37.0, 38.0, 39.0, 40.0]
    # bottom evicts frames 1..36 and promotes 1, 3, 5, ...; level 1 then evicts
    # 1, 3, ..., 31 and promotes every second of those: 1, 5, ..., 29
    assert [f.timestamp for f in p.levels[1]] == [33.0, 35.0]
    assert [f.timestamp for f in p.levels[2]] == [29.0]
    units = [u.timestamp for u in p.units]
    assert units == sorted(units)


def test_empty_policies_give_empty_snapshots():
    for kind in PolicyKind:
        snap = policy_snapshot(make_policy(kind, 10))
        assert snap.n_tokens == 0 and snap.tokens() is None


def test_similarity_merge_trace_equals_similarity_only_forest():
    for seed in range(5):
        a = make_policy("pemf", 60, PenaltyWeights(1, 0, 0), keep_trace=True)
        b = SimilarityMergePolicy(60, keep_trace=True)
        for x, t in window_nodes(seed):
            a.update(x, t)
            b.update(x, t)
        assert len(a.trace) > 10
        assert a.trace == b.trace
        assert [u.span for u in a.units] == [u.span for u in b.units]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from(list(PolicyKind)), st.integers(5, 80))
def test_every_policy_respects_its_budget(seed, kind, budget):
    p = make_policy(kind, budget)
    for x, t in window_nodes(seed, frames=60, d=4):
        p.update(x, t)
        assert p.token_count() <= budget
        assert policy_snapshot(p).n_tokens == p.token_count()
        stamps = [u.timestamp for u in p.units]
        assert all(a < b for a, b in zip(stamps, stamps[1:]))
