import itertools
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, strategies as st

from inforelay import taskgen
from inforelay.taskgen import (ConceptLabels, DelayRegime, generate_block_episode,
                               generate_dataset, generate_memory_episode)

signs = st.sampled_from([-1, 1])
label_st = st.tuples(signs, signs, signs)


def test_memory_episode_all_positive():
    ep = generate_memory_episode((1, 1, 1), 5, (4, 7, 10), rng_seed=0)
    assert ep.inputs.shape == (15, 3)
    expected = np.zeros((15, 3))
    expected[3, 0] = expected[6, 1] = expected[9, 2] = 1.0
    np.testing.assert_array_equal(ep.inputs, expected)


def test_memory_episode_all_negative_no_delay():
    ep = generate_memory_episode((-1, -1, -1), 0, (4, 7, 10))
    expected = np.zeros((10, 3))
    expected[3, 0] = expected[6, 1] = expected[9, 2] = -1.0
    np.testing.assert_array_equal(ep.inputs, expected)


def test_memory_episode_length_fifteen_at_delay_five():
    assert generate_memory_episode((1, -1, 1), 5).length == 15


@pytest.mark.parametrize("times", [(4, 4, 10), (7, 4, 10), (0, 4, 10), (4, 7)])
def test_memory_episode_rejects_bad_times(times):
    with pytest.raises(ValueError):
        generate_memory_episode((1, 1, 1), 1, times)


def test_negative_delay_rejected():
    with pytest.raises(ValueError):
        generate_memory_episode((1, 1, 1), -1)
    with pytest.raises(ValueError):
        generate_block_episode((1, 1, 1), -1, start=0)


def test_labels_must_be_signs():
    with pytest.raises(ValueError):
        generate_memory_episode((1, 0, 1), 1)


def test_block_right_small_bright():
    ep = generate_block_episode((1, -1, 1), 0, start=0)
    assert ep.inputs.shape == (10, 16)
    assert set(np.flatnonzero(ep.inputs[0])) == {0, 1}
    assert set(np.flatnonzero(ep.inputs[1])) == {1, 2}
    assert np.all(ep.inputs[ep.inputs > 0] == 1.0)


def test_block_left_large_dark_wraps():
    ep = generate_block_episode((-1, 1, -1), 2, start=5)
    assert ep.inputs.shape == (12, 16)
    for f in range(10):
        expected = {(5 - f + i) % 16 for i in range(4)}
        assert set(np.flatnonzero(ep.inputs[f])) == expected
        assert np.all(ep.inputs[f][list(expected)] == 0.4)
    assert not ep.inputs[10:].any()
    # frame 6 starts at pixel 15 and wraps onto 0..2
    assert set(np.flatnonzero(ep.inputs[6])) == {15, 0, 1, 2}


def test_block_seed_picks_start_only():
    a = generate_block_episode((1, 1, 1), 0, rng_seed=3)
    b = generate_block_episode((1, 1, 1), 0, rng_seed=3)
    np.testing.assert_array_equal(a.inputs, b.inputs)


def _is_single_circular_run(mask):
    # number of 0 -> 1 transitions around the circle
    return int(np.sum(mask & ~np.roll(mask, 1))) == 1


@pytest.mark.property
@given(label_st, st.integers(0, 6), st.integers(0, 15))
def test_block_frames_are_one_block(labels, delay, start):
    ep = generate_block_episode(labels, delay, start=start)
    size = taskgen.BLOCK_SIZES[labels[1]]
    for f in range(taskgen.BLOCK_FRAMES):
        mask = ep.inputs[f] != 0
        assert mask.sum() == size
        assert _is_single_circular_run(mask)


@pytest.mark.property
@given(label_st, st.integers(0, 9))
def test_memory_sparsity(labels, delay):
    ep = generate_memory_episode(labels, delay)
    assert np.count_nonzero(ep.inputs) == 3


def test_dataset_one_per_class():
    data = generate_dataset("memory", 8, DelayRegime.fixed(1), 0)
    assert len(data) == 8
    assert {tuple(ep.labels) for ep in data} == set(itertools.product((-1, 1), repeat=3))
    assert all(ep.delay == 1 for ep in data)


def test_dataset_random_regime_balance():
    data = generate_dataset("memory", 800, DelayRegime.uniform_random(1, 5), 1)
    assert {ep.delay for ep in data} <= {1, 2, 3, 4, 5}
    assert len({ep.delay for ep in data}) == 5
    assert set(Counter(tuple(ep.labels) for ep in data).values()) == {100}


def test_dataset_byte_identical(tmp_path):
    for task in taskgen.TASKS:
        a, b = tmp_path / f"{task}_a.csv", tmp_path / f"{task}_b.csv"
        taskgen.write_dataset_csv(generate_dataset(task, 16, DelayRegime.uniform_random(), 7), a)
        taskgen.write_dataset_csv(generate_dataset(task, 16, DelayRegime.uniform_random(), 7), b)
        assert a.read_bytes() == b.read_bytes()


@pytest.mark.parametrize("n", [0, 7, 12, -8])
def test_dataset_size_must_be_multiple_of_eight(n):
    with pytest.raises(ValueError):
        generate_dataset("memory", n, DelayRegime.fixed(1), 0)


@pytest.mark.property
@given(st.sampled_from(taskgen.TASKS), st.integers(1, 6), st.integers(0, 2**31 - 1),
       st.sampled_from(["fixed1", "fixed5", "random1-5", "eval0", "eval9"]))
def test_dataset_invariants(task, blocks, seed, regime):
    n = 8 * blocks
    data = generate_dataset(task, n, DelayRegime.parse(regime), seed)
    assert set(Counter(tuple(ep.labels) for ep in data).values()) == {blocks}
    content = taskgen.content_length(task)
    for ep in data:
        assert ep.inputs.shape == (content + ep.delay, taskgen.input_width(task))
        assert not ep.inputs[ep.length - ep.delay:].any()
        assert ep.inputs[ep.length - ep.delay - 1].any()


def test_regimes():
    assert DelayRegime.parse("fixed3") == DelayRegime.fixed(3)
    assert DelayRegime.parse("random") == DelayRegime.uniform_random(1, 5)
    assert DelayRegime.parse("eval0").max_delay == 0
    assert DelayRegime.uniform_random().max_delay == 5
    with pytest.raises(ValueError):
        DelayRegime.fixed(0)
    with pytest.raises(ValueError):
        DelayRegime.fixed(6)
    with pytest.raises(ValueError):
        DelayRegime.fixed_eval(10)
    rng = np.random.default_rng(0)
    assert set(DelayRegime.fixed_eval(7).sample(rng, 20)) == {7}


def test_block_concept_mapping():
    right = generate_block_episode((1, 1, 1), 0, start=3)
    left = generate_block_episode((-1, 1, 1), 0, start=3)
    first = lambda ep, f: min(np.flatnonzero(ep.inputs[f]))  # noqa: E731
    assert first(right, 1) == 4 and first(left, 1) == 2
    assert generate_block_episode((1, -1, 1), 0, start=3).inputs[0].sum() == 2.0
    assert generate_block_episode((1, 1, -1), 0, start=3).inputs[0].max() == 0.4


def test_csv_round_trip(tmp_path):
    for task in taskgen.TASKS:
        data = generate_dataset(task, 16, DelayRegime.uniform_random(), 2)
        path = tmp_path / f"{task}.csv"
        taskgen.write_dataset_csv(data, path)
        back = taskgen.read_dataset_csv(path)
        assert len(back) == len(data)
        for a, b in zip(data, back):
            np.testing.assert_array_equal(a.inputs, b.inputs)
            assert a.labels == b.labels and a.delay == b.delay
        head = path.read_text().splitlines()[0].split(",")
        d = taskgen.input_width(task)
        assert head == ["episode_id", "t", *[f"ch{i}" for i in range(d)],
                        "label_a", "label_b", "label_c", "delay"]


def test_batch_padding_and_delays():
    data = generate_dataset("memory", 16, DelayRegime.uniform_random(), 4)
    batch = taskgen.to_batch(data)
    for e, ep in enumerate(data):
        np.testing.assert_array_equal(batch.inputs[e, :ep.length], ep.inputs)
        assert not batch.inputs[e, ep.length:].any()
    moved = batch.with_delays(np.full(16, 9))
    assert set(moved.lengths) == {19}
    np.testing.assert_array_equal(moved.inputs[:, :10], batch.inputs[:, :10])


def test_concept_labels_named():
    lab = ConceptLabels(1, -1, 1)
    assert (lab.a, lab.b, lab.c) == (1, -1, 1)
