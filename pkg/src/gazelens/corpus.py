"""Data model for word-level reading measures: CSV I/O, validation,
per-split normalization, and a statistically calibrated synthetic dataset
generator.

A trial is one subject reading one sentence, represented as an ordered
sequence of 12-component reading measure vectors, one per word. A word
that was never fixated is encoded as an all-zero vector so sequences stay
positionally aligned with the sentence.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

MEASURE_NAMES = (
    "fix_x_screen",
    "total_gaze_dur",
    "first_land_pos",
    "last_land_pos",
    "first_fix_dur",
    "out_sacc_dur",
    "out_sacc_dx",
    "out_sacc_dy",
    "out_sacc_dist",
    "in_sacc_dur",
    "in_sacc_dx",
    "in_sacc_dy",
)
N_MEASURES = len(MEASURE_NAMES)

# index groups used by validation and the synthetic generator
_IDX = {name: i for i, name in enumerate(MEASURE_NAMES)}
DURATION_MEASURES = ("total_gaze_dur", "first_fix_dur", "out_sacc_dur", "in_sacc_dur")

FLOAT_FMT = "%.9g"  # text round-trip precision for all measure values


class DatasetFormatError(ValueError):
    """Raised when a dataset file or in-memory dataset violates the format
    or one of its invariants. Messages carry row numbers where available."""


@dataclass(frozen=True)
class Subject:
    subject_id: str
    label: int  # 0 = control, 1 = dyslexic


@dataclass(frozen=True)
class SentenceInfo:
    sentence_id: str
    word_count: int
    char_counts: tuple[int, ...]
    surface: tuple[str, ...] | None = None


@dataclass
class Trial:
    subject_id: str
    sentence_id: str
    measures: np.ndarray  # (word_count, 12) float64; all-zero row = skipped word

    def __post_init__(self) -> None:
        self.measures = np.asarray(self.measures, dtype=np.float64)
        if self.measures.ndim != 2 or self.measures.shape[1] != N_MEASURES:
            raise DatasetFormatError(
                f"trial ({self.subject_id}, {self.sentence_id}): expected "
                f"(words, {N_MEASURES}) measures, got {self.measures.shape}"
            )


def fixated_mask(measures: np.ndarray) -> np.ndarray:
    """Boolean mask of words that were fixated (not the all-zero encoding)."""
    return ~np.all(measures == 0.0, axis=1)


@dataclass
class Dataset:
    subjects: list[Subject]
    sentences: list[SentenceInfo]
    trials: list[Trial]

    def __post_init__(self) -> None:
        self._label = {s.subject_id: s.label for s in self.subjects}
        self._sent = {s.sentence_id: s for s in self.sentences}
        self._by_subject: dict[str, list[Trial]] = {}
        for t in self.trials:
            self._by_subject.setdefault(t.subject_id, []).append(t)

    def label_of(self, subject_id: str) -> int:
        return self._label[subject_id]

    def sentence(self, sentence_id: str) -> SentenceInfo:
        return self._sent[sentence_id]

    def trials_of(self, subject_id: str) -> list[Trial]:
        return self._by_subject.get(subject_id, [])

    @property
    def subject_ids(self) -> list[str]:
        return [s.subject_id for s in self.subjects]

    def word_positions(self) -> list[tuple[str, int]]:
        """All (sentence_id, word_index) positions in the manifest."""
        return [(s.sentence_id, k) for s in self.sentences for k in range(s.word_count)]


def validate_dataset(ds: Dataset) -> None:
    """Check every dataset invariant; raise DatasetFormatError on the first
    violation. Used by both the loader and the synthetic generator."""
    for s in ds.subjects:
        if s.label not in (0, 1):
            raise DatasetFormatError(f"subject {s.subject_id}: label {s.label} not in {{0, 1}}")
    seen_pairs: set[tuple[str, str]] = set()
    subjects_with_trials: set[str] = set()
    for t in ds.trials:
        key = (t.subject_id, t.sentence_id)
        if t.subject_id not in ds._label:
            raise DatasetFormatError(f"trial {key}: unknown subject")
        if t.sentence_id not in ds._sent:
            raise DatasetFormatError(f"trial {key}: unknown sentence")
        if key in seen_pairs:
            raise DatasetFormatError(f"trial {key}: duplicate (subject, sentence) pair")
        seen_pairs.add(key)
        subjects_with_trials.add(t.subject_id)
        info = ds._sent[t.sentence_id]
        if t.measures.shape[0] != info.word_count:
            raise DatasetFormatError(
                f"trial {key}: {t.measures.shape[0]} words but manifest says {info.word_count}"
            )
        _validate_measures(t.measures, key)
    missing = set(ds._label) - subjects_with_trials
    if missing:
        raise DatasetFormatError(f"subjects without any trial: {sorted(missing)}")


def _validate_measures(m: np.ndarray, key: tuple[str, str]) -> None:
    if not np.all(np.isfinite(m)):
        raise DatasetFormatError(f"trial {key}: non-finite measure value")
    for name in DURATION_MEASURES:
        col = m[:, _IDX[name]]
        if np.any(col < 0):
            raise DatasetFormatError(f"trial {key}: negative {name}")
    tgd, ffd = m[:, _IDX["total_gaze_dur"]], m[:, _IDX["first_fix_dur"]]
    bad = (tgd > 0) & (ffd > 0) & (tgd < ffd)
    if np.any(bad):
        raise DatasetFormatError(f"trial {key}: total_gaze_dur < first_fix_dur at word {int(np.argmax(bad))}")
    dist = m[:, _IDX["out_sacc_dist"]]
    dx = m[:, _IDX["out_sacc_dx"]]
    dy = m[:, _IDX["out_sacc_dy"]]
    active = (dist > 0) & (dx > 0) & (dy > 0)
    bad = active & (dist + 1e-9 < np.maximum(np.abs(dx), np.abs(dy)))
    if np.any(bad):
        raise DatasetFormatError(
            f"trial {key}: out_sacc_dist smaller than a component at word {int(np.argmax(bad))}"
        )


# ---------------------------------------------------------------------------
# CSV I/O
#
# Dataset CSV: subject_id,label,sentence_id,word_index,m1,...,m12 (one row per
# word per trial). Manifest CSV: sentence_id,word_index,char_count[,surface].
# ---------------------------------------------------------------------------

DATASET_HEADER = ["subject_id", "label", "sentence_id", "word_index"] + [
    f"m{i + 1}" for i in range(N_MEASURES)
]
MANIFEST_HEADER = ["sentence_id", "word_index", "char_count"]


def load_manifest(path: str) -> list[SentenceInfo]:
    per_sentence: dict[str, dict[int, tuple[int, str | None]]] = {}
    order: list[str] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:3]] != MANIFEST_HEADER:
            raise DatasetFormatError(f"{path}: expected manifest header {MANIFEST_HEADER}")
        has_surface = len(header) > 3 and header[3].strip() == "surface"
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                sid, widx, cc = row[0], int(row[1]), int(row[2])
            except (ValueError, IndexError) as exc:
                raise DatasetFormatError(f"{path} row {row_no}: {exc}") from None
            surface = row[3] if has_surface and len(row) > 3 else None
            if sid not in per_sentence:
                per_sentence[sid] = {}
                order.append(sid)
            if widx in per_sentence[sid]:
                raise DatasetFormatError(f"{path} row {row_no}: duplicate word {widx} in sentence {sid}")
            per_sentence[sid][widx] = (cc, surface)
    sentences = []
    for sid in sorted(order):
        words = per_sentence[sid]
        if sorted(words) != list(range(len(words))):
            raise DatasetFormatError(f"sentence {sid}: word indices not contiguous from 0")
        ccs = tuple(words[k][0] for k in range(len(words)))
        surf = tuple(words[k][1] or "" for k in range(len(words)))
        sentences.append(
            SentenceInfo(sid, len(words), ccs, surf if any(surf) else None)
        )
    return sentences


def load_dataset(path: str, manifest_path: str) -> Dataset:
    """Parse and validate a dataset CSV against its sentence manifest.

    Raises DatasetFormatError with the offending row number for malformed
    rows, and with the trial identity for invariant violations.
    """
    sentences = load_manifest(manifest_path)
    sent_map = {s.sentence_id: s for s in sentences}
    labels: dict[str, int] = {}
    rows: dict[tuple[str, str], dict[int, np.ndarray]] = {}
    trial_order: list[tuple[str, str]] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != DATASET_HEADER:
            raise DatasetFormatError(f"{path}: expected header {','.join(DATASET_HEADER)}")
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(DATASET_HEADER):
                raise DatasetFormatError(f"{path} row {row_no}: expected {len(DATASET_HEADER)} columns")
            subj, label_s, sid, widx_s = row[0], row[1], row[2], row[3]
            try:
                label = int(label_s)
                widx = int(widx_s)
                vals = np.array([float(v) for v in row[4:]], dtype=np.float64)
            except ValueError as exc:
                raise DatasetFormatError(f"{path} row {row_no}: non-numeric value ({exc})") from None
            if label not in (0, 1):
                raise DatasetFormatError(f"{path} row {row_no}: label must be 0 or 1")
            if labels.setdefault(subj, label) != label:
                raise DatasetFormatError(f"{path} row {row_no}: inconsistent label for subject {subj}")
            if sid not in sent_map:
                raise DatasetFormatError(f"{path} row {row_no}: unknown sentence {sid}")
            key = (subj, sid)
            if key not in rows:
                rows[key] = {}
                trial_order.append(key)
            if widx in rows[key]:
                raise DatasetFormatError(f"{path} row {row_no}: duplicate word {widx} for trial {key}")
            _check_row(vals, path, row_no)
            rows[key][widx] = vals
    trials = []
    for key in sorted(trial_order):
        words = rows[key]
        expected = sent_map[key[1]].word_count
        if sorted(words) != list(range(expected)):
            raise DatasetFormatError(
                f"trial {key}: word indices {sorted(words)} not contiguous 0..{expected - 1}"
            )
        trials.append(Trial(key[0], key[1], np.stack([words[k] for k in range(expected)])))
    subjects = [Subject(s, labels[s]) for s in sorted(labels)]
    ds = Dataset(subjects, sentences, trials)
    validate_dataset(ds)
    return ds


def _check_row(vals: np.ndarray, path: str, row_no: int) -> None:
    for name in DURATION_MEASURES:
        if vals[_IDX[name]] < 0:
            raise DatasetFormatError(f"{path} row {row_no}: negative {name}")


def write_dataset(ds: Dataset, path: str, manifest_path: str | None = None) -> None:
    """Write a dataset CSV (and optionally its manifest) with 9 significant
    digits per measure, the text round-trip precision of the format."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(DATASET_HEADER)
        for t in sorted(ds.trials, key=lambda t: (t.subject_id, t.sentence_id)):
            label = ds.label_of(t.subject_id)
            for k in range(t.measures.shape[0]):
                writer.writerow(
                    [t.subject_id, label, t.sentence_id, k]
                    + [FLOAT_FMT % v for v in t.measures[k]]
                )
    if manifest_path is not None:
        write_manifest(ds.sentences, manifest_path)


def write_manifest(sentences: Sequence[SentenceInfo], path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        has_surface = any(s.surface for s in sentences)
        writer.writerow(MANIFEST_HEADER + (["surface"] if has_surface else []))
        for s in sorted(sentences, key=lambda s: s.sentence_id):
            for k in range(s.word_count):
                row = [s.sentence_id, k, s.char_counts[k]]
                if has_surface:
                    row.append(s.surface[k] if s.surface else "")
                writer.writerow(row)


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------


@dataclass
class NormStats:
    """Per-dimension mean and standard deviation over a collection of
    row-stacked vectors. Population (divide by N) convention; a constant
    dimension stores std 1 so z-scoring maps it to 0 instead of dividing
    by zero."""

    mean: np.ndarray
    std: np.ndarray

    @property
    def width(self) -> int:
        return self.mean.shape[0]


def fit_normalizer(arrays: Sequence[np.ndarray], width: int | None = None) -> NormStats:
    """Fit per-dimension mean/std over all rows of all arrays in the
    collection. Each array is (rows, width)."""
    if len(arrays) == 0:
        raise ValueError("cannot fit a normalizer on an empty collection")
    stacked = np.concatenate([np.atleast_2d(a) for a in arrays], axis=0)
    if width is not None and stacked.shape[1] != width:
        raise ValueError(f"expected width {width}, got {stacked.shape[1]}")
    mean = stacked.mean(axis=0)
    std = stacked.std(axis=0)  # population convention
    std = np.where(std == 0.0, 1.0, std)
    return NormStats(mean=mean, std=std)


def apply_normalizer(stats: NormStats, arrays: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Z-score each array with the fitted stats; inputs are not modified."""
    out = []
    for a in arrays:
        a = np.atleast_2d(a)
        if a.shape[1] != stats.width:
            raise ValueError(f"width mismatch: stats {stats.width}, data {a.shape[1]}")
        out.append((a - stats.mean) / stats.std)
    return out


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------

# Plausible control-group parameters per measure. Durations are sampled
# log-normal, locations and saccade extents normal. Landing positions are
# sampled uniformly over the word's characters and out_sacc_dist is derived
# as hypot(out_sacc_dx, out_sacc_dy); the entries below for those measures
# are placeholders that the generator ignores.
DEFAULT_CONTROL_MEAN = np.array(
    [512.0, 480.0, 0.0, 0.0, 230.0, 30.0, 40.0, 5.0, 0.0, 32.0, 45.0, 5.0]
)
DEFAULT_CONTROL_STD = np.array(
    [180.0, 220.0, 0.0, 0.0, 70.0, 12.0, 60.0, 30.0, 0.0, 12.0, 65.0, 30.0]
)
# Group mean shift in control SDs: durations elevated, horizontal saccade
# extents mildly elevated.
DEFAULT_EFFECT_SIZE = np.array(
    [0.0, 0.8, 0.0, 0.0, 0.8, 0.8, 0.3, 0.0, 0.0, 0.8, 0.3, 0.0]
)

_CHAR_COUNT_VALUES = np.array([1, 2, 3])
_CHAR_COUNT_PROBS = np.array([38.0, 372.0, 22.0]) / 432.0


@dataclass
class SyntheticSpec:
    """Generator parameters. Defaults mirror the reference dataset shape:
    62 children (33 dyslexic), 60 sentences of 7 to 13 words, with each
    child retaining between 24 and 59 sentences after exclusions."""

    n_subjects: int = 62
    n_dyslexic: int = 33
    n_sentences: int = 60
    word_count_min: int = 7
    word_count_max: int = 13
    retention_min: int = 24
    retention_max: int = 59
    skip_prob: float = 0.1
    control_mean: np.ndarray = field(default_factory=lambda: DEFAULT_CONTROL_MEAN.copy())
    control_std: np.ndarray = field(default_factory=lambda: DEFAULT_CONTROL_STD.copy())
    effect_size: np.ndarray = field(default_factory=lambda: DEFAULT_EFFECT_SIZE.copy())
    seed: int = 0

    def validate(self) -> None:
        if not (0 <= self.n_dyslexic <= self.n_subjects):
            raise ValueError("n_dyslexic must be between 0 and n_subjects")
        if self.n_subjects < 1 or self.n_sentences < 1:
            raise ValueError("need at least one subject and one sentence")
        if not (1 <= self.word_count_min <= self.word_count_max):
            raise ValueError("invalid word count range")
        if not (1 <= self.retention_min <= self.retention_max <= self.n_sentences):
            raise ValueError("retention range must lie within [1, n_sentences]")
        if not (0.0 <= self.skip_prob < 1.0):
            raise ValueError("skip_prob must be in [0, 1)")
        for name, arr in (
            ("control_mean", self.control_mean),
            ("control_std", self.control_std),
            ("effect_size", self.effect_size),
        ):
            arr = np.asarray(arr, dtype=np.float64)
            if arr.shape != (N_MEASURES,):
                raise ValueError(f"{name} must have {N_MEASURES} entries")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must be finite")
        idx = [_IDX[n] for n in DURATION_MEASURES]
        mean = np.asarray(self.control_mean)[idx]
        std = np.asarray(self.control_std)[idx]
        eff = np.asarray(self.effect_size)[idx]
        if np.any(mean <= 0) or np.any(std <= 0):
            raise ValueError("duration measures need positive control mean and std")
        if np.any(mean + eff * std <= 0):
            raise ValueError("dyslexic duration means must stay positive")
        m_f, s_f = self.control_mean[_IDX["first_fix_dur"]], self.control_std[_IDX["first_fix_dur"]]
        m_t, s_t = self.control_mean[_IDX["total_gaze_dur"]], self.control_std[_IDX["total_gaze_dur"]]
        if m_t <= m_f or s_t <= s_f:
            raise ValueError("total_gaze_dur mean/std must exceed first_fix_dur mean/std")


def _lognormal(rng: np.random.Generator, mean: float, std: float, size: int) -> np.ndarray:
    sigma2 = math.log(1.0 + (std / mean) ** 2)
    mu = math.log(mean) - sigma2 / 2.0
    return rng.lognormal(mu, math.sqrt(sigma2), size)


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    """Generate a validated synthetic dataset, a pure function of the spec.

    Dyslexic-group measures are shifted by effect_size control SDs. Words
    are skipped (all-zero row) independently with skip_prob. total gaze
    duration is first fixation duration plus an independent log-normal
    remainder so the duration ordering invariant holds by construction.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n_sent_digits = max(2, len(str(spec.n_sentences - 1)))
    n_subj_digits = max(2, len(str(spec.n_subjects - 1)))

    word_counts = rng.integers(spec.word_count_min, spec.word_count_max + 1, spec.n_sentences)
    sentences = []
    for j in range(spec.n_sentences):
        ccs = tuple(int(c) for c in rng.choice(_CHAR_COUNT_VALUES, word_counts[j], p=_CHAR_COUNT_PROBS))
        sentences.append(SentenceInfo(f"sent{j:0{n_sent_digits}d}", int(word_counts[j]), ccs))

    dyslexic = set(rng.permutation(spec.n_subjects)[: spec.n_dyslexic].tolist())
    subjects = [
        Subject(f"subj{i:0{n_subj_digits}d}", int(i in dyslexic)) for i in range(spec.n_subjects)
    ]

    mean = np.asarray(spec.control_mean, dtype=np.float64)
    std = np.asarray(spec.control_std, dtype=np.float64)
    eff = np.asarray(spec.effect_size, dtype=np.float64)

    trials = []
    for i, subj in enumerate(subjects):
        n_keep = int(rng.integers(spec.retention_min, spec.retention_max + 1))
        kept = np.sort(rng.choice(spec.n_sentences, n_keep, replace=False))
        shift = eff * std if subj.label == 1 else np.zeros(N_MEASURES)
        for j in kept:
            info = sentences[j]
            trials.append(Trial(subj.subject_id, info.sentence_id, _sample_trial(rng, info, mean, std, shift, spec.skip_prob)))

    ds = Dataset(subjects, sentences, trials)
    validate_dataset(ds)
    return ds


def _sample_trial(
    rng: np.random.Generator,
    info: SentenceInfo,
    mean: np.ndarray,
    std: np.ndarray,
    shift: np.ndarray,
    skip_prob: float,
) -> np.ndarray:
    k = info.word_count
    m = np.zeros((k, N_MEASURES))
    m[:, _IDX["fix_x_screen"]] = rng.normal(mean[0] + shift[0], std[0], k)
    ffd = _lognormal(rng, mean[_IDX["first_fix_dur"]] + shift[_IDX["first_fix_dur"]], std[_IDX["first_fix_dur"]], k)
    extra_mean = (mean[_IDX["total_gaze_dur"]] + shift[_IDX["total_gaze_dur"]]) - (
        mean[_IDX["first_fix_dur"]] + shift[_IDX["first_fix_dur"]]
    )
    extra_std = math.sqrt(std[_IDX["total_gaze_dur"]] ** 2 - std[_IDX["first_fix_dur"]] ** 2)
    m[:, _IDX["first_fix_dur"]] = ffd
    m[:, _IDX["total_gaze_dur"]] = ffd + _lognormal(rng, extra_mean, extra_std, k)
    ccs = np.array(info.char_counts, dtype=np.float64)
    m[:, _IDX["first_land_pos"]] = rng.random(k) * ccs
    m[:, _IDX["last_land_pos"]] = rng.random(k) * ccs
    for name in ("out_sacc_dur", "in_sacc_dur"):
        m[:, _IDX[name]] = _lognormal(rng, mean[_IDX[name]] + shift[_IDX[name]], std[_IDX[name]], k)
    for name in ("out_sacc_dx", "out_sacc_dy", "in_sacc_dx", "in_sacc_dy"):
        m[:, _IDX[name]] = rng.normal(mean[_IDX[name]] + shift[_IDX[name]], std[_IDX[name]], k)
    m[:, _IDX["out_sacc_dist"]] = np.hypot(m[:, _IDX["out_sacc_dx"]], m[:, _IDX["out_sacc_dy"]])
    skipped = rng.random(k) < skip_prob
    m[skipped] = 0.0
    return m
