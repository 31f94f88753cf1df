import numpy as np
import pytest

from inforelay import ablation, infotheory, recnet, taskgen
from inforelay.recnet import HIDDEN, Knockout
from inforelay.taskgen import DelayRegime

T_A = 10   # first step after the last memory pulse


@pytest.fixture(scope="module")
def trained():
    out = {}
    for arch in ("RNN", "LSTM"):
        params, _ = recnet.train(arch, "memory", DelayRegime.fixed(3), 21)
        data = taskgen.generate_dataset("memory", 200, DelayRegime.fixed_eval(3), 4)
        out[arch] = (params, taskgen.to_batch(data))
    return out


def test_empty_knockout_is_identity(trained):
    for params, batch in trained.values():
        for e in range(0, 200, 37):
            x = batch.inputs[e]
            plain = recnet.forward(params, x)[2]
            ko = ablation.forward_with_knockout(params, x, (), T_A)
            assert np.array_equal(plain, ko)
        full = recnet.run(params, batch.inputs)[2]
        acc = ablation.knockout_accuracy(params, batch, (), T_A)
        np.testing.assert_array_equal(acc, recnet.evaluate_accuracy(params, batch)[1])
        assert full.shape == (200, 3)


def test_full_knockout_is_chance(trained):
    for params, batch in trained.values():
        acc = ablation.knockout_accuracy(params, batch, range(HIDDEN), T_A)
        assert abs(acc.mean() - 0.5) <= 0.05
        out = [ablation.forward_with_knockout(params, x, range(HIDDEN), T_A) for x in batch.inputs[:20]]
        assert np.ptp(np.array(out), axis=0).max() == 0.0


def test_silent_node_knockout_changes_nothing(trained):
    params, batch = trained["RNN"]
    Wx, Wh, b = params.Wx.copy(), params.Wh.copy(), params.b.copy()
    Wx[:, 7] = Wh[:, 7] = 0.0
    b[7] = 0.0
    silent = params.replace(Wx=Wx, Wh=Wh, b=b)
    assert not recnet.run(silent, batch.inputs)[0][..., 7].any()
    for x in batch.inputs[:30]:
        assert np.array_equal(ablation.forward_with_knockout(silent, x, [7], T_A),
                              recnet.forward(silent, x)[2])


def test_lstm_knockout_zeroes_cell(trained):
    params, batch = trained["LSTM"]
    h, c, _, _ = recnet.run(params, batch.inputs[:5], knockout=Knockout((1, 4), T_A))
    assert not h[:, T_A, [1, 4]].any() and not c[:, T_A, [1, 4]].any()
    assert c[:, T_A + 1, [1, 4]].any()
    h, c, _, _ = recnet.run(params, batch.inputs[:5], knockout=Knockout((1, 4), T_A, True))
    assert not c[:, T_A:, [1, 4]].any()


def test_knockout_rejects_bad_node(trained):
    params, batch = trained["RNN"]
    with pytest.raises(ValueError):
        ablation.forward_with_knockout(params, batch.inputs[0], [12], T_A)
    with pytest.raises(ValueError):
        ablation.random_knockout_baseline(params, batch, 13, 5, T_A, 0)


def _orderings(params, batch):
    tr = recnet.record_traces(params, batch)
    return infotheory.relay_matrix(tr, T_A).orderings


def test_sweep_reference_rows(trained):
    params, batch = trained["LSTM"]
    sweep = ablation.knockout_sweep(params, batch, _orderings(params, batch), T_A)
    assert sweep.accuracy.shape == (3, 13, 3)
    intact = recnet.evaluate_accuracy(params, batch)[1]
    full = ablation.knockout_accuracy(params, batch, range(HIDDEN), T_A)
    for c in range(3):
        np.testing.assert_array_equal(sweep.accuracy[c, 0], intact)
        np.testing.assert_array_equal(sweep.accuracy[c, 12], full)
    np.testing.assert_array_equal(sweep.drop(0, 0), np.zeros(3))


def test_sweep_uses_most_relaying_nodes(trained):
    params, batch = trained["RNN"]
    orderings = _orderings(params, batch)
    sweep = ablation.knockout_sweep(params, batch, orderings, T_A)
    for c in range(3):
        top3 = orderings[c].removal_order[-3:]
        np.testing.assert_array_equal(
            sweep.accuracy[c, 3], ablation.knockout_accuracy(params, batch, top3, T_A))


def test_random_baseline(trained):
    params, batch = trained["RNN"]
    a = ablation.random_knockout_baseline(params, batch, 4, 10, T_A, seed=3)
    b = ablation.random_knockout_baseline(params, batch, 4, 10, T_A, seed=3)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(ablation.random_knockout_baseline(params, batch, 0, 5, T_A, 1),
                                  recnet.evaluate_accuracy(params, batch)[1])
    np.testing.assert_array_equal(ablation.random_knockout_baseline(params, batch, 12, 5, T_A, 1),
                                  ablation.knockout_accuracy(params, batch, range(12), T_A))


def test_random_disruption_monotone_in_expectation(trained):
    for params, batch in trained.values():
        curve = ablation.random_baseline_curve(params, batch, 50, T_A, seed=0).mean(axis=1)
        assert np.all(np.diff(curve) <= 0.03)


def test_sweep_csv(tmp_path, trained):
    params, batch = trained["RNN"]
    sweep = ablation.knockout_sweep(params, batch, _orderings(params, batch), T_A)
    base = ablation.random_baseline_curve(params, batch, 3, T_A, seed=0)
    path = tmp_path / "k.csv"
    ablation.write_sweep_csv(sweep, path, base, ("A", "B", "C"))
    lines = path.read_text().splitlines()
    assert lines[0] == "concept,set_size,acc_a,acc_b,acc_c,baseline"
    assert len(lines) == 1 + 3 * 13
    row = lines[1 + 13 + 4].split(",")
    assert row[:2] == ["B", "4"] and float(row[5]) == base[4, 1]
