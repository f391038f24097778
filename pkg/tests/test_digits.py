import warnings

import numpy as np
from tdreservoir import digits
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tdreservoir import GridTopology, ReservoirConfig
from tdreservoir.digits import (
    ClassifierReport,
    DegenerateLabelError,
    DigitInstance,
    MalformedFileError,
    UnknownLabelError,
    baseline_linear,
    classify_run,
    classify_states,
    encode_targets,
    load_dataset,
    load_instance,
    make_folds,
    save_dataset,
    synthetic_digits,
    trim,
)


def write(path, label, rows=78, cols=48, value=None):
    rng = np.random.default_rng(0)
    data = rng.random((rows, cols)) if value is None else np.full((rows, cols), value)
    path.write_text(f"digit {label}\n" + "\n".join(" ".join(map(str, r)) for r in data) + "\n")
    return path


def test_load_normalizes(tmp_path):
    inst = load_instance(write(tmp_path / "a.txt", 4))
    assert inst.label == 4 and inst.features.shape == (78, 48)
    assert inst.features.min() == 0.0 and inst.features.max() == 1.0


def test_77_rows_malformed(tmp_path):
    with pytest.raises(MalformedFileError):
        load_instance(write(tmp_path / "a.txt", 1, rows=77))


def test_non_finite_malformed(tmp_path):
    p = write(tmp_path / "a.txt", 1)
    p.write_text(p.read_text().replace("\n0", "\nnan", 1))
    with pytest.raises(MalformedFileError):
        load_instance(p)


def test_constant_file_zeroed_with_warning(tmp_path):
    with pytest.warns(RuntimeWarning):
        inst = load_instance(write(tmp_path / "a.txt", 2, value=3.0))
    assert np.all(inst.features == 0.0)


def test_unknown_label(tmp_path):
    with pytest.raises(UnknownLabelError):
        load_instance(write(tmp_path / "a.txt", 11))


def test_dataset_roundtrip(tmp_path):
    inst = synthetic_digits(2, seed=1)
    save_dataset(tmp_path, inst)
    back = load_dataset(tmp_path)
    assert len(back) == 20
    assert [b.label for b in back] == [i.label for i in inst]
    assert np.allclose(back[3].features, inst[3].features, atol=1e-5)


def test_synthetic_set_shape():
    inst = synthetic_digits()
    assert len(inst) == 500
    assert np.bincount([i.label for i in inst]).tolist() == [50] * 10
    assert all(0.0 <= i.features.min() and i.features.max() <= 1.0 for i in inst)
    assert np.array_equal(synthetic_digits(1, 3)[0].features, synthetic_digits(1, 3)[0].features)


def test_trim():
    f = np.random.default_rng(0).random((78, 48))
    out = trim(f)
    assert out.shape == (78, 30)
    assert all(np.array_equal(out[:, j], f[:, j + 10]) for j in range(30))
    with pytest.raises(ValueError):
        trim(out)


def test_encode_targets():
    assert encode_targets(3).tolist() == [-1, -1, -1, 1, -1, -1, -1, -1, -1, -1]
    assert all(encode_targets(k).sum() == -8 for k in range(10))
    with pytest.raises(UnknownLabelError):
        encode_targets(10)


def test_folds_disjoint_and_stratified():
    labels = np.repeat(np.arange(10), 50)
    folds = make_folds(labels, 5, seed=3)
    allidx = np.concatenate(folds)
    assert sorted(allidx.tolist()) == list(range(500))
    for f in folds:
        assert np.bincount(labels[f], minlength=10).tolist() == [10] * 10


def fake_states(labels, seed=0, steps=5, n=12):
    rng = np.random.default_rng(seed)
    protos = rng.standard_normal((10, n))
    return [protos[l][:, None] + 0.8 * rng.standard_normal((n, steps)) for l in labels]


labels40 = np.repeat(np.arange(10), 4)


def test_single_class_rejected():
    labels = np.zeros(20, dtype=int)
    with pytest.raises(DegenerateLabelError):
        classify_states(fake_states(labels), labels, make_folds(labels, 5))


def test_empty_fold_rejected():
    folds = make_folds(labels40, 4)
    with pytest.raises(ValueError):
        classify_states(fake_states(labels40), labels40, folds + [np.array([], dtype=int)])
    inst = synthetic_digits(2)
    with pytest.raises(ValueError):
        baseline_linear(inst, [np.arange(10), np.array([], dtype=int)])


def test_overlapping_folds_rejected():
    with pytest.raises(ValueError):
        classify_states(fake_states(labels40), labels40, [np.arange(20), np.arange(10, 40)])


@settings(max_examples=100)
@given(st.integers(0, 2**31), st.integers(2, 5))
def test_confusion_accounting(seed, n_folds):
    rng = np.random.default_rng(seed)
    labels = np.concatenate([np.arange(10).repeat(n_folds), rng.integers(0, 10, rng.integers(0, 10))])
    folds = make_folds(labels, n_folds, seed)
    rep = classify_states(fake_states(labels, seed), labels, folds)
    assert rep.confusion.sum() == labels.size
    assert rep.confusion.sum(1).tolist() == np.bincount(labels, minlength=10).tolist()
    assert rep.pooled_accuracy == pytest.approx(np.trace(rep.confusion) / labels.size)
    for f, acc in zip(folds, rep.fold_accuracy):
        assert 0.0 <= acc <= 1.0 and acc * f.size == pytest.approx(round(acc * f.size))


@settings(max_examples=100)
@given(st.lists(st.floats(-5, 5), min_size=10, max_size=10), st.floats(-100, 100))
def test_argmax_invariant_to_constant_shift(y, c):
    y = np.array(y)
    assert np.argmax(y + c) == np.argmax(y) or np.isclose(y.max(), np.sort(y)[-2])


def test_fold_order_invariance():
    states = fake_states(labels40, 1)
    folds = make_folds(labels40, 4, seed=2)
    a = classify_states(states, labels40, folds)
    perm = np.random.default_rng(5).permutation(40)
    inv = np.argsort(perm)
    states_p = [states[i] for i in perm]
    labels_p = labels40[perm]
    folds_p = [np.sort(inv[f]) for f in folds]
    b = classify_states(states_p, labels_p, [inv[f] for f in folds])
    c = classify_states(states_p, labels_p, folds_p)
    assert np.allclose(a.fold_accuracy, b.fold_accuracy)
    assert np.allclose(a.fold_accuracy, c.fold_accuracy)
    assert np.array_equal(a.confusion, c.confusion)


def test_reports_writers(tmp_path):
    rep = classify_states(fake_states(labels40), labels40, make_folds(labels40, 4))
    rep.write_json(tmp_path / "r.json")
    rep.write_confusion_csv(tmp_path / "c.csv")
    assert len((tmp_path / "c.csv").read_text().splitlines()) == 11
    assert isinstance(rep, ClassifierReport) and rep.method == "reservoir"


def test_classify_run_smoke():
    inst = synthetic_digits(2, seed=4)
    cfg = ReservoirConfig(topology=GridTopology(3, 3), input_step=3e-7)
    labels = np.array([i.label for i in inst])
    folds = [np.flatnonzero(np.arange(20) % 2 == k) for k in range(2)]
    assert all(sorted(labels[f]) == list(range(10)) for f in folds)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rep = classify_run(inst, cfg, folds)
        base = baseline_linear(inst, folds)
    assert rep.confusion.sum() == 20 == base.confusion.sum()
    assert len(rep.config_hash) == 64 and rep.config_hash != base.config_hash


def test_instance_validation():
    with pytest.raises(MalformedFileError):
        DigitInstance(np.zeros((78, 30)), 1)
    with pytest.raises(UnknownLabelError):
        DigitInstance(np.zeros((78, 48)), -1)


def test_decision_rules_and_reset_are_reported():
    insts = digits.synthetic_digits(3, 4)
    labels = np.array([i.label for i in insts])
    folds = digits.make_folds(labels, 3, 0)
    cfg = ReservoirConfig(topology=GridTopology(3, 3), input_step=2e-6, seed=1)
    a = digits.classify_run(insts, cfg, folds, decision="last", reset_between=False)
    assert a.to_dict()["protocol"] == {"decision": "last", "n_folds": 3, "reset_between": False}
    b = digits.classify_run(insts, cfg, folds)
    assert b.protocol["decision"] == "mean" and b.protocol["reset_between"] is True
    assert a.config_hash != b.config_hash
    with pytest.raises(ValueError):
        digits.classify_states([np.zeros((2, 3))] * 2, [0, 1], [[0], [1]], decision="max")


def test_no_reset_carries_state_in_dataset_order():
    insts = digits.synthetic_digits(1, 2)[:3]
    cfg = ReservoirConfig(topology=GridTopology(2, 2), input_step=2e-6, seed=3)
    kept = digits.reservoir_states(insts, cfg, reset_between=True)
    carried = digits.reservoir_states(insts, cfg, reset_between=False)
    assert np.array_equal(kept[0], carried[0])
    fresh = digits.reservoir_states(insts[1:2], cfg)[0]
    assert np.array_equal(fresh, kept[1])
    assert not np.array_equal(carried[1], kept[1])
