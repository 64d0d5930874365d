import numpy as np
import pytest

from gazelens.corpus import (
    Dataset,
    SentenceInfo,
    Subject,
    SyntheticSpec,
    Trial,
    fit_normalizer,
    fixated_mask,
    generate_synthetic,
)
from gazelens.stimulus import (
    EMBED_DIM,
    EmbeddingTable,
    FeatureTable,
    LinguisticFeatureRow,
    MeanDiffTrainConfig,
    SidecarFormatError,
    build_enriched_sequences,
    encode_manual_features,
    encode_meandiff,
    fit_manual_encoder,
    fit_meandiff_encoder,
    fit_pca,
    fit_stimulus,
    load_embedding_table,
    load_feature_table,
    meandiff_output,
    meandiff_targets,
    project_pca,
    write_embedding_table,
    write_feature_table,
)


def _sentences():
    return [SentenceInfo("s0", 2, (2, 2)), SentenceInfo("s1", 3, (1, 2, 2))]


def _positions(sentences):
    return [(s.sentence_id, k) for s in sentences for k in range(s.word_count)]


def _table_for(sentences, rng, dim=EMBED_DIM):
    return EmbeddingTable({p: rng.normal(size=dim) for p in _positions(sentences)})


# ---------------------------------------------------------------------------
# embedding sidecar
# ---------------------------------------------------------------------------


def test_embedding_sidecar_round_trip(tmp_path):
    sentences = _sentences()
    table = _table_for(sentences, np.random.default_rng(0))
    path = tmp_path / "emb.csv"
    write_embedding_table(table, str(path))
    loaded = load_embedding_table(str(path), sentences)
    assert len(loaded.vectors) == 5
    for p, v in table.vectors.items():
        assert np.allclose(loaded[p], v, atol=1e-9)


def test_embedding_sidecar_missing_position(tmp_path):
    sentences = _sentences()
    table = _table_for(sentences, np.random.default_rng(0))
    del table.vectors[("s1", 2)]
    path = tmp_path / "emb.csv"
    write_embedding_table(table, str(path))
    with pytest.raises(SidecarFormatError, match=r"s1.*2"):
        load_embedding_table(str(path), sentences)


def test_embedding_sidecar_wrong_width(tmp_path):
    path = tmp_path / "emb.csv"
    header = "sentence_id,word_index," + ",".join(f"e{i+1}" for i in range(767))
    path.write_text(header + "\n" + "s0,0," + ",".join(["0.0"] * 767) + "\n")
    with pytest.raises(SidecarFormatError, match="767"):
        load_embedding_table(str(path), [SentenceInfo("s0", 1, (2,))])


# ---------------------------------------------------------------------------
# PCA
# ---------------------------------------------------------------------------


def test_pca_rank_one_data_recovers_the_line():
    rng = np.random.default_rng(1)
    direction = rng.normal(size=50)
    direction /= np.linalg.norm(direction)
    positions = [("s", k) for k in range(30)]
    table = EmbeddingTable({p: float(rng.normal()) * direction for p in positions})
    model = fit_pca(table, positions, n_components=5)
    # first component parallel to the generating line
    assert abs(abs(model.components[0] @ direction) - 1.0) < 1e-9
    assert np.all(model.explained_variance[1:] < 1e-18)


def test_pca_matches_covariance_eigendecomposition_oracle():
    rng = np.random.default_rng(2)
    positions = [("s", k) for k in range(100)]
    x = rng.normal(size=(100, 40)) @ rng.normal(size=(40, 40))  # correlated dims
    table = EmbeddingTable({p: x[i] for i, p in enumerate(positions)})
    model = fit_pca(table, positions, n_components=10)

    # oracle: dense symmetric eigendecomposition of the population covariance
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / x.shape[0]
    evals, evecs = np.linalg.eigh(cov)
    evals, evecs = evals[::-1], evecs[:, ::-1]
    assert np.allclose(model.explained_variance, evals[:10], atol=1e-6)
    for i in range(10):
        dot = abs(model.components[i] @ evecs[:, i])
        assert abs(dot - 1.0) < 1e-6  # equal up to sign


def test_pca_explained_variance_nonincreasing_and_orthonormal():
    rng = np.random.default_rng(3)
    positions = [("s", k) for k in range(80)]
    x = np.repeat(rng.normal(size=(80, 15)), 2, axis=1)  # duplicated coordinates
    table = EmbeddingTable({p: x[i] for i, p in enumerate(positions)})
    model = fit_pca(table, positions, n_components=12)
    assert np.all(np.diff(model.explained_variance) <= 1e-12)
    gram = model.components @ model.components.T
    assert np.max(np.abs(gram - np.eye(12))) < 1e-8


def test_pca_projection_variance_equals_eigenvalues():
    rng = np.random.default_rng(4)
    positions = [("s", k) for k in range(60)]
    x = rng.normal(size=(60, 25)) * np.linspace(5, 0.1, 25)
    table = EmbeddingTable({p: x[i] for i, p in enumerate(positions)})
    model = fit_pca(table, positions, n_components=8)
    proj = np.stack([project_pca(model, x[i]) for i in range(60)])
    assert np.allclose(proj.var(axis=0), model.explained_variance, atol=1e-6)


def test_pca_requires_enough_vectors():
    rng = np.random.default_rng(5)
    positions = [("s", k) for k in range(10)]
    table = EmbeddingTable({p: rng.normal(size=30) for p in positions})
    with pytest.raises(ValueError, match="more than"):
        fit_pca(table, positions, n_components=10)


def test_project_pca_centering_and_orthonormality():
    rng = np.random.default_rng(6)
    positions = [("s", k) for k in range(40)]
    table = EmbeddingTable({p: rng.normal(size=20) for p in positions})
    model = fit_pca(table, positions, n_components=6)
    assert np.allclose(project_pca(model, model.mean), np.zeros(6), atol=1e-12)
    e1 = project_pca(model, model.mean + model.components[0])
    assert np.allclose(e1, np.eye(6)[0], atol=1e-9)
    v = rng.normal(size=20)
    assert np.sum(project_pca(model, v) ** 2) <= np.sum((v - model.mean) ** 2) + 1e-9


def test_project_pca_width_mismatch():
    model = fit_pca(
        EmbeddingTable({("s", k): np.random.default_rng(7).normal(size=10) for k in range(15)}),
        [("s", k) for k in range(15)],
        n_components=3,
    )
    with pytest.raises(ValueError, match="width"):
        project_pca(model, np.zeros(11))


# ---------------------------------------------------------------------------
# mean-difference encoder
# ---------------------------------------------------------------------------


def _two_class_trials(rng, n_per_class=4, sentences=None, dim=EMBED_DIM):
    sentences = sentences or _sentences()
    subjects, trials, labels = [], [], {}
    for c in (0, 1):
        for i in range(n_per_class):
            sid = f"c{c}_{i}"
            subjects.append(Subject(sid, c))
            labels[sid] = c
            for s in sentences:
                m = np.abs(rng.normal(size=(s.word_count, 12))) + 0.5
                if c == 1:
                    m += 1.0
                trials.append(Trial(sid, s.sentence_id, m))
    return trials, labels, sentences


def test_meandiff_targets_match_bruteforce_groupby():
    rng = np.random.default_rng(8)
    trials, labels, sentences = _two_class_trials(rng)
    positions, targets = meandiff_targets(trials, labels)

    # independent brute-force per-position group means
    for pos, tgt in zip(positions, targets):
        per_class = {0: [], 1: []}
        for t in trials:
            if t.sentence_id == pos[0]:
                row = t.measures[pos[1]]
                if np.any(row != 0):
                    per_class[labels[t.subject_id]].append(row)
        expected = np.mean(per_class[1], axis=0) - np.mean(per_class[0], axis=0)
        assert np.max(np.abs(tgt - expected)) < 1e-12


def test_meandiff_targets_skip_single_class_positions():
    sentences = [SentenceInfo("s0", 2, (2, 2))]
    trials = [
        Trial("a", "s0", np.array([[1.0] * 12, [0.0] * 12])),  # control skips word 1
        Trial("b", "s0", np.array([[2.0] * 12, [3.0] * 12])),
    ]
    labels = {"a": 0, "b": 1}
    positions, targets = meandiff_targets(trials, labels)
    assert positions == [("s0", 0)]
    assert np.allclose(targets[0], np.ones(12))


def test_meandiff_identical_groups_give_near_zero_outputs():
    rng = np.random.default_rng(9)
    sentences = _sentences()
    # both classes share the exact same measures at every position
    shared = {s.sentence_id: np.abs(rng.normal(size=(s.word_count, 12))) + 0.5 for s in sentences}
    trials, labels = [], {}
    for c in (0, 1):
        sid = f"subj{c}"
        labels[sid] = c
        for s in sentences:
            trials.append(Trial(sid, s.sentence_id, shared[s.sentence_id].copy()))
    table = _table_for(sentences, rng)
    enc = fit_meandiff_encoder(table, trials, labels, MeanDiffTrainConfig(epochs=200, seed=0))
    for pos in [(s.sentence_id, k) for s in sentences for k in range(s.word_count)]:
        assert np.linalg.norm(meandiff_output(enc, table[pos])) < 0.05


def test_meandiff_single_point_regression_is_realizable():
    rng = np.random.default_rng(10)
    sentences = [SentenceInfo("s0", 1, (2,))]
    target = np.zeros(12)
    target[0] = 1.0
    trials = [
        Trial("a", "s0", np.ones((1, 12))),
        Trial("b", "s0", np.ones((1, 12)) + target),
    ]
    labels = {"a": 0, "b": 1}
    table = _table_for(sentences, rng)
    enc = fit_meandiff_encoder(table, trials, labels, MeanDiffTrainConfig(epochs=2000, learning_rate=3e-3, seed=1))
    out = meandiff_output(enc, table[("s0", 0)])
    assert np.mean((out - target) ** 2) < 1e-2
    assert np.max(np.abs(out - target)) < 0.1


def test_meandiff_requires_both_classes():
    rng = np.random.default_rng(11)
    sentences = _sentences()
    trials = [Trial("a", "s0", np.ones((2, 12)))]
    with pytest.raises(ValueError, match="both classes"):
        fit_meandiff_encoder(_table_for(sentences, rng), trials, {"a": 0})


def test_encode_meandiff_zero_network_and_shape():
    rng = np.random.default_rng(12)
    trials, labels, sentences = _two_class_trials(rng, n_per_class=2)
    table = _table_for(sentences, rng)
    enc = fit_meandiff_encoder(table, trials, labels, MeanDiffTrainConfig(epochs=1, seed=0))
    assert encode_meandiff(enc, table[("s0", 0)]).shape == (20,)
    zeroed = type(enc)({k: np.zeros_like(v) for k, v in enc.params.items()}, enc.input_norm)
    assert np.all(encode_meandiff(zeroed, table[("s0", 0)]) == 0.0)
    with pytest.raises(ValueError, match="width"):
        encode_meandiff(enc, np.zeros(10))


def test_encode_meandiff_matches_hand_forward_pass():
    from gazelens.corpus import NormStats
    from gazelens.stimulus import MeanDiffEncoder

    params = {
        "w1": np.array([[1.0, 0.0, 2.0], [0.5, -1.0, 0.0]]),
        "b1": np.array([0.1, 0.2, -0.3]),
        "w2": np.zeros((3, 12)),
        "b2": np.zeros(12),
    }
    enc = MeanDiffEncoder(params, NormStats(mean=np.zeros(2), std=np.ones(2)))
    x = np.array([0.4, -0.6])
    expected = np.tanh(np.array([
        0.4 * 1.0 + (-0.6) * 0.5 + 0.1,
        0.4 * 0.0 + (-0.6) * (-1.0) + 0.2,
        0.4 * 2.0 + (-0.6) * 0.0 - 0.3,
    ]))
    assert np.allclose(encode_meandiff(enc, x), expected, atol=1e-12)


# ---------------------------------------------------------------------------
# manual features
# ---------------------------------------------------------------------------


def _feature_table(sentences):
    rows = {}
    tags = ["NOUN", "VERB", "ADJ"]
    deps = ["nsubj", "obj", "root"]
    for i, p in enumerate(_positions(sentences)):
        rows[p] = LinguisticFeatureRow(
            surprisal=float(i) + 0.5,
            pos_tag=tags[i % 3],
            dep_rel=deps[i % 3],
            head_dist=(i % 5) - 2,
            char_freq=10.0 * (i + 1),
            lex_freq=100.0 * (i + 1),
        )
    return FeatureTable(rows)


def test_manual_one_hot_blocks():
    sentences = _sentences()
    table = _feature_table(sentences)
    enc = fit_manual_encoder(table, _positions(sentences))
    vec = encode_manual_features(enc, table[("s0", 0)])
    assert vec.shape == (enc.width,)
    pos_block = vec[4 : 4 + len(enc.pos_vocab) + 1]
    dep_block = vec[4 + len(enc.pos_vocab) + 1 :]
    assert pos_block.sum() == 1.0 and dep_block.sum() == 1.0
    assert pos_block[enc.pos_vocab.index("NOUN")] == 1.0
    assert pos_block[-1] == 0.0  # OOV slot untouched


def test_manual_unseen_tag_goes_to_oov_slot():
    sentences = _sentences()
    table = _feature_table(sentences)
    enc = fit_manual_encoder(table, _positions(sentences))
    unseen = LinguisticFeatureRow(1.0, "INTJ", "discourse", 0, 5.0, 7.0)
    vec = encode_manual_features(enc, unseen)
    pos_block = vec[4 : 4 + len(enc.pos_vocab) + 1]
    dep_block = vec[4 + len(enc.pos_vocab) + 1 :]
    assert pos_block[-1] == 1.0 and pos_block[:-1].sum() == 0.0
    assert dep_block[-1] == 1.0 and dep_block[:-1].sum() == 0.0


def test_manual_surprisal_of_certain_word_is_zero_before_zscoring():
    # conditional probability 1 => -log 1 = 0 nats
    assert -np.log(1.0) == 0.0
    row = LinguisticFeatureRow(-np.log(1.0), "NOUN", "root", 0, 1.0, 1.0)
    assert row.surprisal == 0.0


def test_manual_width_formula():
    sentences = _sentences()
    table = _feature_table(sentences)
    enc = fit_manual_encoder(table, _positions(sentences))
    assert enc.width == 4 + (len(enc.pos_vocab) + 1) + (len(enc.dep_vocab) + 1)


def test_feature_sidecar_round_trip(tmp_path):
    sentences = _sentences()
    table = _feature_table(sentences)
    path = tmp_path / "features.csv"
    write_feature_table(table, str(path))
    loaded = load_feature_table(str(path), sentences)
    assert loaded[("s1", 2)] == table[("s1", 2)]


# ---------------------------------------------------------------------------
# enrichment
# ---------------------------------------------------------------------------


def _small_synth(seed=0):
    return generate_synthetic(
        SyntheticSpec(n_subjects=6, n_dyslexic=3, n_sentences=5, word_count_min=4,
                      word_count_max=6, retention_min=4, retention_max=5, seed=seed)
    )


def _small_tables(ds, rng, dim=EMBED_DIM):
    positions = ds.word_positions()
    emb = EmbeddingTable({p: rng.normal(size=dim) for p in positions})
    tags = ["NOUN", "VERB"]
    feats = FeatureTable(
        {
            p: LinguisticFeatureRow(abs(rng.normal()), tags[i % 2], "root", 0, 10.0, 20.0)
            for i, p in enumerate(positions)
        }
    )
    return emb, feats


@pytest.mark.parametrize("kind,expected_width", [("none", 12), ("pca", 32), ("meandiff", 32)])
def test_enriched_widths(kind, expected_width):
    ds = _small_synth()
    rng = np.random.default_rng(20)
    emb, feats = _small_tables(ds, rng)
    labels = {s.subject_id: s.label for s in ds.subjects}
    repr_ = fit_stimulus(kind, ds.trials, labels, embeddings=emb, features=feats,
                         meandiff_config=MeanDiffTrainConfig(epochs=2, seed=0))
    norm = fit_normalizer([t.measures for t in ds.trials])
    seqs = build_enriched_sequences(ds.trials, repr_, norm)
    assert all(s.shape == (t.measures.shape[0], expected_width) for s, t in zip(seqs, ds.trials))
    assert repr_.enriched_width == expected_width


def test_enriched_manual_width_consistent():
    ds = _small_synth()
    rng = np.random.default_rng(21)
    emb, feats = _small_tables(ds, rng)
    labels = {s.subject_id: s.label for s in ds.subjects}
    repr_ = fit_stimulus("manual", ds.trials, labels, features=feats)
    norm = fit_normalizer([t.measures for t in ds.trials])
    seqs = build_enriched_sequences(ds.trials, repr_, norm)
    widths = {s.shape[1] for s in seqs}
    assert widths == {repr_.enriched_width}
    assert repr_.enriched_width == 12 + repr_.manual.width


def test_fold_isolation_perturbing_heldout_trials_leaves_artifacts_identical():
    ds = _small_synth(seed=4)
    rng = np.random.default_rng(22)
    emb, feats = _small_tables(ds, rng)
    labels = {s.subject_id: s.label for s in ds.subjects}
    train_subjects = set(list(labels)[:4])
    train = [t for t in ds.trials if t.subject_id in train_subjects]
    held = [t for t in ds.trials if t.subject_id not in train_subjects]

    def fit_all():
        out = {}
        for kind in ("pca", "meandiff", "manual"):
            out[kind] = fit_stimulus(kind, train, labels, embeddings=emb, features=feats,
                                     meandiff_config=MeanDiffTrainConfig(epochs=3, seed=0))
        out["norm"] = fit_normalizer([t.measures for t in train])
        return out

    before = fit_all()
    for t in held:  # mutate every held-out trial in place
        t.measures *= 3.0
        t.measures += 17.0
    after = fit_all()

    assert np.array_equal(before["norm"].mean, after["norm"].mean)
    assert np.array_equal(before["pca"].pca.components, after["pca"].pca.components)
    assert np.array_equal(before["pca"].pca.mean, after["pca"].pca.mean)
    for k in before["meandiff"].encoder.params:
        assert np.array_equal(before["meandiff"].encoder.params[k], after["meandiff"].encoder.params[k])
    assert before["manual"].manual.pos_vocab == after["manual"].manual.pos_vocab
    assert np.array_equal(before["manual"].manual.numeric_norm.mean, after["manual"].manual.numeric_norm.mean)
