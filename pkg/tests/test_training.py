import numpy as np
import pytest

from gazelens.networks import CnnConfig, FfnConfig, LstmConfig
from gazelens.serialize import load_params, save_params, save_params_json
from gazelens.training import (
    ModelParams,
    TrainConfig,
    TrainingDivergedError,
    evaluate_loss,
    gradient_check,
    predict_proba,
    train_classifier,
)


def _lstm_cfg():
    return LstmConfig(input_width=3, hidden_size=4)


def _cnn_cfg():
    return CnnConfig(input_width=3, c1_channels=2, c1_kernel=3, c1_pool="max",
                     c2_channels=3, c2_kernel=3, c2_pool="average", l1_size=4, dropout=0.0)


def _toy_batch(rng, n=5, width=3):
    seqs = [rng.normal(size=(int(rng.integers(3, 8)), width)) for _ in range(n)]
    labels = rng.integers(0, 2, n).astype(float)
    return seqs, labels


def test_gradient_check_lstm():
    rng = np.random.default_rng(1)
    seqs, labels = _toy_batch(rng)
    err = gradient_check("lstm", _lstm_cfg(), seqs, labels=labels, seed=0)
    assert err < 1e-4


def test_gradient_check_cnn():
    rng = np.random.default_rng(2)
    seqs, labels = _toy_batch(rng)
    err = gradient_check("cnn", _cnn_cfg(), seqs, labels=labels, seed=0)
    assert err < 1e-4


def test_gradient_check_ffn():
    rng = np.random.default_rng(3)
    cfg = FfnConfig(input_width=5, hidden_size=3, output_width=2)
    xs = [rng.normal(size=5) for _ in range(6)]
    targets = rng.normal(size=(6, 2))
    err = gradient_check("ffn", cfg, xs, targets=targets, seed=0)
    assert err < 1e-6


def _separable_set(rng, n=20, width=3, gap=3.0):
    """Sequences whose mean of the first dimension cleanly separates labels."""
    seqs, labels = [], []
    for i in range(n):
        label = i % 2
        base = gap if label else -gap
        seq = rng.normal(size=(int(rng.integers(5, 10)), width))
        seq[:, 0] += base
        seqs.append(seq)
        labels.append(float(label))
    return seqs, np.array(labels)


@pytest.mark.parametrize(
    "kind,cfg",
    [
        ("lstm", LstmConfig(input_width=3, hidden_size=10)),
        # grid-minimum widths: tiny rectifier stacks can die wholesale at init
        ("cnn", CnnConfig(input_width=3, c1_channels=5, c1_kernel=3, c1_pool="max",
                          c2_channels=10, c2_kernel=3, c2_pool="average", l1_size=10, dropout=0.1)),
    ],
)
def test_training_reaches_full_accuracy_on_separable_toy(kind, cfg):
    rng = np.random.default_rng(42)
    seqs, labels = _separable_set(rng)
    tc = TrainConfig(batch_size=8, learning_rate=0.02, max_epochs=200, patience=50, seed=0)
    model = train_classifier(kind, cfg, seqs, labels, seqs, labels, tc)
    preds = (predict_proba(model, seqs) >= 0.5).astype(float)
    assert np.all(preds == labels)


def test_training_returns_best_earlystop_epoch():
    rng = np.random.default_rng(7)
    train_seqs, train_labels = _separable_set(rng, n=16)
    es_seqs, es_labels = _separable_set(rng, n=8)
    tc = TrainConfig(batch_size=4, learning_rate=0.05, max_epochs=40, patience=5, seed=1)
    model = train_classifier("lstm", _lstm_cfg(), train_seqs, train_labels, es_seqs, es_labels, tc)
    best_loss = evaluate_loss("lstm", model.tensors, model.config, es_seqs, es_labels)

    # train to the bitter end with no early stopping and compare
    tc_full = TrainConfig(batch_size=4, learning_rate=0.05, max_epochs=40, patience=10**9, seed=1)
    model_full = train_classifier("lstm", _lstm_cfg(), train_seqs, train_labels, es_seqs, es_labels, tc_full)
    final_loss = evaluate_loss("lstm", model_full.tensors, model_full.config, es_seqs, es_labels)
    assert best_loss <= final_loss + 1e-12


def test_training_bit_identical_across_runs():
    rng = np.random.default_rng(9)
    seqs, labels = _separable_set(rng, n=12)
    tc = TrainConfig(batch_size=4, learning_rate=0.01, max_epochs=10, patience=10, seed=5)
    a = train_classifier("cnn", _cnn_cfg(), seqs, labels, seqs, labels, tc)
    b = train_classifier("cnn", _cnn_cfg(), seqs, labels, seqs, labels, tc)
    assert a.tensors.keys() == b.tensors.keys()
    for k in a.tensors:
        assert np.array_equal(a.tensors[k], b.tensors[k])


def test_training_divergence_raises_with_diagnostic():
    # rectifier activations compound multiplicatively, so an absurd step
    # size genuinely overflows the CNN loss to non-finite
    rng = np.random.default_rng(10)
    seqs, labels = _separable_set(rng, n=10, gap=50.0)
    tc = TrainConfig(batch_size=4, learning_rate=1e120, max_epochs=30, patience=30, seed=2)
    with pytest.raises(TrainingDivergedError, match="non-finite"):
        train_classifier("cnn", _cnn_cfg(), seqs, labels, seqs, labels, tc)


def test_training_rejects_bad_inputs():
    tc = TrainConfig(batch_size=4, learning_rate=0.01)
    with pytest.raises(ValueError, match="non-empty"):
        train_classifier("lstm", _lstm_cfg(), [], [], [np.zeros((3, 3))], [0], tc)
    with pytest.raises(ValueError, match="binary"):
        train_classifier("lstm", _lstm_cfg(), [np.zeros((3, 3))], [2.0], [np.zeros((3, 3))], [0], tc)


def test_params_binary_round_trip(tmp_path):
    rng = np.random.default_rng(11)
    seqs, labels = _separable_set(rng, n=8)
    tc = TrainConfig(batch_size=4, learning_rate=0.01, max_epochs=3, patience=3, seed=3)
    model = train_classifier("lstm", _lstm_cfg(), seqs, labels, seqs, labels, tc)
    path = tmp_path / "model.gzmp"
    save_params(model, str(path))
    loaded = load_params(str(path))
    assert loaded.kind == model.kind
    assert loaded.config == model.config
    for k in model.tensors:
        assert np.array_equal(loaded.tensors[k], model.tensors[k])
    save_params_json(model, str(tmp_path / "model.json"))
    import json

    doc = json.loads((tmp_path / "model.json").read_text())
    assert doc["kind"] == "lstm"
    assert set(doc["tensors"]) == set(model.tensors)


def test_serialize_rejects_wrong_magic(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"NOPE1234")
    with pytest.raises(ValueError, match="not a model"):
        load_params(str(path))


@pytest.mark.parametrize("seed", range(5))
def test_gradient_check_many_seeds_all_architectures(seed):
    rng = np.random.default_rng(100 + seed)
    seqs, labels = _toy_batch(rng)
    assert gradient_check("lstm", _lstm_cfg(), seqs, labels=labels, seed=seed) < 1e-4
    assert gradient_check("cnn", _cnn_cfg(), seqs, labels=labels, seed=seed) < 1e-4
    cfg = FfnConfig(input_width=5, hidden_size=3, output_width=2)
    xs = [rng.normal(size=5) for _ in range(4)]
    targets = rng.normal(size=(4, 2))
    assert gradient_check("ffn", cfg, xs, targets=targets, seed=seed) < 1e-6
