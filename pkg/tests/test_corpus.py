import numpy as np
import pytest

from gazelens import corpus
from gazelens.corpus import (
    Dataset,
    DatasetFormatError,
    NormStats,
    SentenceInfo,
    Subject,
    SyntheticSpec,
    Trial,
    apply_normalizer,
    fit_normalizer,
    fixated_mask,
    generate_synthetic,
    load_dataset,
    write_dataset,
)


def _row(**overrides):
    """A measure row satisfying every per-word invariant."""
    base = {
        "fix_x_screen": 100.0,
        "total_gaze_dur": 250.0,
        "first_land_pos": 1.0,
        "last_land_pos": 1.5,
        "first_fix_dur": 200.0,
        "out_sacc_dur": 30.0,
        "out_sacc_dx": 40.0,
        "out_sacc_dy": 5.0,
        "out_sacc_dist": 41.0,
        "in_sacc_dur": 25.0,
        "in_sacc_dx": 35.0,
        "in_sacc_dy": 4.0,
    }
    base.update(overrides)
    return [base[name] for name in corpus.MEASURE_NAMES]


def _tiny_dataset():
    sentences = [
        SentenceInfo("sent00", 2, (2, 2)),
        SentenceInfo("sent01", 3, (1, 2, 3)),
    ]
    subjects = [Subject("subj00", 0), Subject("subj01", 1)]
    trials = []
    for s in subjects:
        trials.append(Trial(s.subject_id, "sent00", np.array([_row(), _row()])))
        trials.append(Trial(s.subject_id, "sent01", np.array([_row(), _row(), _row()])))
    return Dataset(subjects, sentences, trials)


def _write_csvs(ds, tmp_path):
    data = tmp_path / "data.csv"
    manifest = tmp_path / "manifest.csv"
    write_dataset(ds, str(data), str(manifest))
    return str(data), str(manifest)


# ---------------------------------------------------------------------------
# loading and validation
# ---------------------------------------------------------------------------


def test_load_well_formed_two_by_two(tmp_path):
    data, manifest = _write_csvs(_tiny_dataset(), tmp_path)
    ds = load_dataset(data, manifest)
    assert len(ds.trials) == 4
    assert ds.subject_ids == ["subj00", "subj01"]
    assert ds.label_of("subj01") == 1
    assert all(t.measures.shape[1] == 12 for t in ds.trials)


def test_load_word_index_gap_names_trial(tmp_path):
    data, manifest = _write_csvs(_tiny_dataset(), tmp_path)
    lines = open(data).read().splitlines()
    # drop word 1 of subj00/sent01, then re-add word 3 style gap: rewrite index
    out = []
    for ln in lines:
        if ln.startswith("subj00,0,sent01,1,"):
            ln = ln.replace("subj00,0,sent01,1,", "subj00,0,sent01,3,", 1)
        out.append(ln)
    open(data, "w").write("\n".join(out) + "\n")
    with pytest.raises(DatasetFormatError, match=r"subj00.*sent01"):
        load_dataset(data, manifest)


def test_load_negative_duration_reports_row(tmp_path):
    data, manifest = _write_csvs(_tiny_dataset(), tmp_path)
    lines = open(data).read().splitlines()
    bad = _row(first_fix_dur=-5.0)
    lines[3] = ",".join(lines[3].split(",")[:4] + [corpus.FLOAT_FMT % v for v in bad])
    open(data, "w").write("\n".join(lines) + "\n")
    with pytest.raises(DatasetFormatError, match=r"row 4.*first_fix_dur"):
        load_dataset(data, manifest)


def test_load_duplicate_word_row(tmp_path):
    data, manifest = _write_csvs(_tiny_dataset(), tmp_path)
    lines = open(data).read().splitlines()
    lines.append(lines[1])
    open(data, "w").write("\n".join(lines) + "\n")
    with pytest.raises(DatasetFormatError, match="duplicate word"):
        load_dataset(data, manifest)


def test_load_missing_column(tmp_path):
    data, manifest = _write_csvs(_tiny_dataset(), tmp_path)
    lines = open(data).read().splitlines()
    lines[0] = ",".join(lines[0].split(",")[:-1])
    lines[1] = ",".join(lines[1].split(",")[:-1])
    open(data, "w").write("\n".join(lines) + "\n")
    with pytest.raises(DatasetFormatError, match="header"):
        load_dataset(data, manifest)


def test_load_inconsistent_label(tmp_path):
    data, manifest = _write_csvs(_tiny_dataset(), tmp_path)
    lines = open(data).read().splitlines()
    lines[2] = lines[2].replace("subj00,0,", "subj00,1,", 1)
    open(data, "w").write("\n".join(lines) + "\n")
    with pytest.raises(DatasetFormatError, match="inconsistent label"):
        load_dataset(data, manifest)


def test_round_trip_is_a_fixpoint(tmp_path):
    ds = generate_synthetic(SyntheticSpec(n_subjects=4, n_dyslexic=2, n_sentences=5,
                                          retention_min=3, retention_max=5, seed=7))
    d1, m1 = tmp_path / "d1.csv", tmp_path / "m1.csv"
    write_dataset(ds, str(d1), str(m1))
    loaded = load_dataset(str(d1), str(m1))
    d2, m2 = tmp_path / "d2.csv", tmp_path / "m2.csv"
    write_dataset(loaded, str(d2), str(m2))
    assert d1.read_bytes() == d2.read_bytes()
    assert m1.read_bytes() == m2.read_bytes()
    # semantic identity of the re-loaded trials
    again = load_dataset(str(d2), str(m2))
    assert len(again.trials) == len(loaded.trials)
    for a, b in zip(again.trials, loaded.trials):
        assert (a.subject_id, a.sentence_id) == (b.subject_id, b.sentence_id)
        assert np.array_equal(a.measures, b.measures)


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------


def test_fit_normalizer_two_point_population_std():
    arrays = [np.array([[1.0], [3.0]])]
    stats = fit_normalizer(arrays)
    assert stats.mean[0] == pytest.approx(2.0)
    assert stats.std[0] == pytest.approx(1.0)  # population convention


def test_fit_normalizer_constant_dimension_gets_std_one():
    stats = fit_normalizer([np.array([[5.0], [5.0], [5.0]])])
    assert stats.mean[0] == 5.0
    assert stats.std[0] == 1.0


def test_fit_normalizer_matches_two_pass_oracle():
    rng = np.random.default_rng(42)
    x = rng.normal(3.0, 2.0, size=(1000, 1))
    stats = fit_normalizer([x])
    # independent two-pass computation
    mean = sum(float(v) for v in x[:, 0]) / 1000
    var = sum((float(v) - mean) ** 2 for v in x[:, 0]) / 1000
    assert stats.mean[0] == pytest.approx(mean, abs=1e-12)
    assert stats.std[0] == pytest.approx(var**0.5, abs=1e-12)
    # within 3 standard errors of the generator parameters
    assert abs(stats.mean[0] - 3.0) < 3 * 2.0 / np.sqrt(1000)
    assert abs(stats.std[0] - 2.0) < 3 * 2.0 / np.sqrt(2 * 1000)


def test_apply_normalizer_zscore_identity():
    rng = np.random.default_rng(0)
    arrays = [rng.normal(5, 3, size=(20, 4)) for _ in range(10)]
    stats = fit_normalizer(arrays)
    normed = np.concatenate(apply_normalizer(stats, arrays))
    assert np.all(np.abs(normed.mean(axis=0)) < 1e-9)
    assert np.all(np.abs(normed.std(axis=0) - 1.0) < 1e-9)


def test_apply_normalizer_identity_stats():
    x = np.arange(12.0).reshape(3, 4)
    stats = NormStats(mean=np.zeros(4), std=np.ones(4))
    out = apply_normalizer(stats, [x])[0]
    assert np.array_equal(out, x)
    # input untouched
    assert np.array_equal(x, np.arange(12.0).reshape(3, 4))


def test_apply_normalizer_disjoint_test_set_not_centered():
    rng = np.random.default_rng(1)
    train = [rng.normal(0, 1, size=(50, 3))]
    test = [rng.normal(2, 1, size=(50, 3))]
    stats = fit_normalizer(train)
    out = np.concatenate(apply_normalizer(stats, test))
    assert np.all(np.abs(out.mean(axis=0)) > 0.5)


def test_apply_normalizer_width_mismatch():
    stats = NormStats(mean=np.zeros(3), std=np.ones(3))
    with pytest.raises(ValueError, match="width"):
        apply_normalizer(stats, [np.zeros((2, 4))])


def test_fit_normalizer_empty_collection():
    with pytest.raises(ValueError, match="empty"):
        fit_normalizer([])


# ---------------------------------------------------------------------------
# synthetic generation
# ---------------------------------------------------------------------------


def test_synthetic_paper_shape():
    ds = generate_synthetic(SyntheticSpec(seed=3))
    assert len(ds.subjects) == 62
    assert sum(s.label for s in ds.subjects) == 33
    assert len(ds.sentences) == 60
    assert all(7 <= s.word_count <= 13 for s in ds.sentences)
    for sid in ds.subject_ids:
        assert 24 <= len(ds.trials_of(sid)) <= 59


def test_synthetic_deterministic(tmp_path):
    spec = SyntheticSpec(n_subjects=6, n_dyslexic=3, n_sentences=8,
                         retention_min=4, retention_max=8, seed=11)
    a, b = generate_synthetic(spec), generate_synthetic(spec)
    pa, pb = tmp_path / "a.csv", tmp_path / "b.csv"
    write_dataset(a, str(pa))
    write_dataset(b, str(pb))
    assert pa.read_bytes() == pb.read_bytes()


def test_synthetic_contains_skipped_words():
    ds = generate_synthetic(SyntheticSpec(n_subjects=4, n_dyslexic=2, n_sentences=10,
                                          retention_min=8, retention_max=10,
                                          skip_prob=0.2, seed=5))
    n_skipped = sum(int((~fixated_mask(t.measures)).sum()) for t in ds.trials)
    assert n_skipped > 0


def test_synthetic_effect_size_recovered_by_welch():
    ds = generate_synthetic(SyntheticSpec(seed=19))
    col = corpus.MEASURE_NAMES.index("total_gaze_dur")
    groups = {0: [], 1: []}
    for t in ds.trials:
        vals = t.measures[fixated_mask(t.measures), col]
        groups[ds.label_of(t.subject_id)].extend(vals.tolist())
    ctl, dys = np.array(groups[0]), np.array(groups[1])
    # Welch two-sample machinery: group means and variances computed directly
    diff = dys.mean() - ctl.mean()
    se = np.sqrt(dys.var(ddof=1) / len(dys) + ctl.var(ddof=1) / len(ctl))
    assert diff / se > 10  # unmistakably separated groups
    d = diff / ctl.std(ddof=1)
    assert abs(d - 0.8) < 0.15


def test_synthetic_invalid_spec():
    with pytest.raises(ValueError):
        generate_synthetic(SyntheticSpec(n_subjects=4, n_dyslexic=5))
    with pytest.raises(ValueError):
        generate_synthetic(SyntheticSpec(retention_min=50, retention_max=70, n_sentences=60))
