"""Per-word stimulus representations and sequence enrichment.

Four representations can be concatenated to the normalized reading
measures: nothing, a 20-component PCA projection of precomputed 768-wide
contextual word embeddings, the 20 hidden activations of a
mean-difference encoder (a small network trained to predict per-word
group differences in reading measures from the embedding), or manually
extracted linguistic features. All representation artifacts are fitted on
training-fold data only; embeddings and linguistic features arrive as
sidecar files and are never computed in-process.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from . import networks as nets
from .corpus import (
    N_MEASURES,
    NormStats,
    SentenceInfo,
    Trial,
    apply_normalizer,
    fit_normalizer,
    fixated_mask,
)

EMBED_DIM = 768
PCA_COMPONENTS = 20
ENCODER_HIDDEN = 20

REPR_NONE = "none"
REPR_PCA = "pca"
REPR_MEANDIFF = "meandiff"
REPR_MANUAL = "manual"
REPR_KINDS = (REPR_NONE, REPR_PCA, REPR_MEANDIFF, REPR_MANUAL)

Position = tuple[str, int]  # (sentence_id, word_index)


class SidecarFormatError(ValueError):
    """A sidecar file is malformed or does not cover the manifest."""


# ---------------------------------------------------------------------------
# embedding table
# ---------------------------------------------------------------------------


@dataclass
class EmbeddingTable:
    vectors: dict[Position, np.ndarray]

    def __getitem__(self, pos: Position) -> np.ndarray:
        return self.vectors[pos]

    def matrix(self, positions: Sequence[Position]) -> np.ndarray:
        return np.stack([self.vectors[p] for p in positions])


def load_embedding_table(path: str, sentences: Sequence[SentenceInfo]) -> EmbeddingTable:
    """Load the embedding sidecar (sentence_id,word_index,e1..e768) and
    check it covers every manifest position at the right width."""
    vectors: dict[Position, np.ndarray] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:2] != ["sentence_id", "word_index"]:
            raise SidecarFormatError(f"{path}: expected header sentence_id,word_index,e1,...")
        if len(header) - 2 != EMBED_DIM:
            raise SidecarFormatError(f"{path}: {len(header) - 2} embedding columns, expected {EMBED_DIM}")
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) - 2 != EMBED_DIM:
                raise SidecarFormatError(f"{path} row {row_no}: {len(row) - 2} values, expected {EMBED_DIM}")
            try:
                pos = (row[0], int(row[1]))
                vec = np.array([float(v) for v in row[2:]], dtype=np.float64)
            except ValueError as exc:
                raise SidecarFormatError(f"{path} row {row_no}: {exc}") from None
            vectors[pos] = vec
    missing = [
        (s.sentence_id, k)
        for s in sentences
        for k in range(s.word_count)
        if (s.sentence_id, k) not in vectors
    ]
    if missing:
        raise SidecarFormatError(f"{path}: missing embedding for position {missing[0]}")
    return EmbeddingTable(vectors)


def write_embedding_table(table: EmbeddingTable, path: str, fmt: str = "%.9g") -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sentence_id", "word_index"] + [f"e{i + 1}" for i in range(EMBED_DIM)])
        for (sid, k) in sorted(table.vectors):
            writer.writerow([sid, k] + [fmt % v for v in table.vectors[(sid, k)]])


# ---------------------------------------------------------------------------
# PCA on embeddings
# ---------------------------------------------------------------------------


@dataclass
class PcaModel:
    mean: np.ndarray  # (width,)
    components: np.ndarray  # (n_components, width), orthonormal rows
    explained_variance: np.ndarray  # (n_components,), descending


def fit_pca(
    table: EmbeddingTable, positions: Sequence[Position], n_components: int = PCA_COMPONENTS
) -> PcaModel:
    """Centering means and leading principal components of the embedding
    vectors at the given (training-fold) positions.

    Computed through an SVD of the centered data matrix, which factors the
    same population covariance an eigendecomposition would. Component signs
    follow a fixed convention: the largest-magnitude coordinate is positive.
    """
    x = table.matrix(sorted(set(positions)))
    if x.shape[0] <= n_components:
        raise ValueError(f"need more than {n_components} distinct vectors, got {x.shape[0]}")
    mean = x.mean(axis=0)
    centered = x - mean
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    components = vt[:n_components]
    explained = (svals[:n_components] ** 2) / x.shape[0]  # population covariance eigenvalues
    for i in range(components.shape[0]):
        j = int(np.argmax(np.abs(components[i])))
        if components[i, j] < 0:
            components[i] = -components[i]
    return PcaModel(mean=mean, components=components, explained_variance=explained)


def project_pca(model: PcaModel, vec: np.ndarray) -> np.ndarray:
    vec = np.asarray(vec, dtype=np.float64)
    if vec.shape[-1] != model.mean.shape[0]:
        raise ValueError(f"width mismatch: model {model.mean.shape[0]}, vector {vec.shape[-1]}")
    return (vec - model.mean) @ model.components.T


# ---------------------------------------------------------------------------
# mean-difference encoder
# ---------------------------------------------------------------------------


@dataclass
class MeanDiffEncoder:
    """768 -> 20 -> 12 network regressing per-word group differences of the
    reading measures, plus the input normalization fitted during training.
    The 20 hidden tanh activations are the compressed representation."""

    params: dict[str, np.ndarray]
    input_norm: NormStats


@dataclass
class MeanDiffTrainConfig:
    epochs: int = 200
    learning_rate: float = 1e-3
    seed: int = 0


def meandiff_targets(
    trials: Sequence[Trial], labels_by_subject: dict[str, int]
) -> tuple[list[Position], np.ndarray]:
    """Per-position regression targets: dyslexic-group mean minus
    control-group mean of each measure, over fixated words of the given
    (training-fold) trials. Positions fixated by only one class are
    skipped, as are positions nobody fixated."""
    sums: dict[Position, np.ndarray] = {}
    counts: dict[Position, np.ndarray] = {}
    for t in trials:
        label = labels_by_subject[t.subject_id]
        mask = fixated_mask(t.measures)
        for k in np.nonzero(mask)[0]:
            pos = (t.sentence_id, int(k))
            if pos not in sums:
                sums[pos] = np.zeros((2, N_MEASURES))
                counts[pos] = np.zeros(2)
            sums[pos][label] += t.measures[k]
            counts[pos][label] += 1
    positions = []
    targets = []
    for pos in sorted(sums):
        if counts[pos][0] > 0 and counts[pos][1] > 0:
            positions.append(pos)
            targets.append(sums[pos][1] / counts[pos][1] - sums[pos][0] / counts[pos][0])
    return positions, np.array(targets).reshape(-1, N_MEASURES)


def fit_meandiff_encoder(
    table: EmbeddingTable,
    trials: Sequence[Trial],
    labels_by_subject: dict[str, int],
    config: MeanDiffTrainConfig | None = None,
) -> MeanDiffEncoder:
    """Regress per-word group mean differences from embeddings with a
    single-hidden-layer network (full-batch adaptive gradient descent on
    mean squared error, fixed epoch budget)."""
    config = config or MeanDiffTrainConfig()
    if set(labels_by_subject.values()) != {0, 1}:
        raise ValueError("training fold must contain both classes")
    positions, targets = meandiff_targets(trials, labels_by_subject)
    if not positions:
        raise ValueError("no word position has fixations from both classes")
    inputs = table.matrix(positions)
    input_norm = fit_normalizer([inputs])
    x = ad.constant(apply_normalizer(input_norm, [inputs])[0])

    from .training import Adam  # deferred: training imports networks

    net_cfg = nets.FfnConfig(EMBED_DIM, ENCODER_HIDDEN, N_MEASURES)
    params = nets.as_tensors(nets.init_params(nets.FFN_KIND, net_cfg, np.random.default_rng(config.seed)))
    opt = Adam(params, config.learning_rate)
    for _ in range(config.epochs):
        ad.zero_grads(params)
        out, _ = nets.ffn_apply(params, x)
        loss = ad.mse(out, targets)
        ad.backward(loss)
        opt.step()
    return MeanDiffEncoder({k: p.data for k, p in params.items()}, input_norm)


def encode_meandiff(enc: MeanDiffEncoder, vec: np.ndarray) -> np.ndarray:
    """Hidden-layer activations for one embedding vector, (20,)."""
    vec = np.asarray(vec, dtype=np.float64)
    if vec.shape[-1] != enc.input_norm.width:
        raise ValueError(f"width mismatch: encoder {enc.input_norm.width}, vector {vec.shape[-1]}")
    normed = apply_normalizer(enc.input_norm, [np.atleast_2d(vec)])[0]
    _, hidden = nets.ffn_forward(enc.params, normed)
    return hidden[0]


def meandiff_output(enc: MeanDiffEncoder, vec: np.ndarray) -> np.ndarray:
    """The regression output (predicted group difference per measure), (12,)."""
    normed = apply_normalizer(enc.input_norm, [np.atleast_2d(np.asarray(vec))])[0]
    out, _ = nets.ffn_forward(enc.params, normed)
    return out[0]


# ---------------------------------------------------------------------------
# manually extracted linguistic features
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinguisticFeatureRow:
    surprisal: float  # nats, >= 0
    pos_tag: str
    dep_rel: str
    head_dist: int  # signed word offsets; 0 for the syntactic root
    char_freq: float  # per-million, log-scaled at encode time
    lex_freq: float  # per-million, log-scaled at encode time


@dataclass
class FeatureTable:
    rows: dict[Position, LinguisticFeatureRow]

    def __getitem__(self, pos: Position) -> LinguisticFeatureRow:
        return self.rows[pos]


FEATURE_HEADER = ["sentence_id", "word_index", "surprisal", "pos_tag", "dep_rel", "head_dist", "char_freq", "lex_freq"]


def load_feature_table(path: str, sentences: Sequence[SentenceInfo]) -> FeatureTable:
    rows: dict[Position, LinguisticFeatureRow] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != FEATURE_HEADER:
            raise SidecarFormatError(f"{path}: expected header {','.join(FEATURE_HEADER)}")
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                pos = (row[0], int(row[1]))
                parsed = LinguisticFeatureRow(
                    surprisal=float(row[2]),
                    pos_tag=row[3],
                    dep_rel=row[4],
                    head_dist=int(row[5]),
                    char_freq=float(row[6]),
                    lex_freq=float(row[7]),
                )
            except (ValueError, IndexError) as exc:
                raise SidecarFormatError(f"{path} row {row_no}: {exc}") from None
            if parsed.surprisal < 0:
                raise SidecarFormatError(f"{path} row {row_no}: negative surprisal")
            rows[pos] = parsed
    missing = [
        (s.sentence_id, k)
        for s in sentences
        for k in range(s.word_count)
        if (s.sentence_id, k) not in rows
    ]
    if missing:
        raise SidecarFormatError(f"{path}: missing features for position {missing[0]}")
    return FeatureTable(rows)


def write_feature_table(table: FeatureTable, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(FEATURE_HEADER)
        for (sid, k) in sorted(table.rows):
            r = table.rows[(sid, k)]
            writer.writerow([sid, k, "%.9g" % r.surprisal, r.pos_tag, r.dep_rel, r.head_dist,
                             "%.9g" % r.char_freq, "%.9g" % r.lex_freq])


@dataclass
class ManualEncoder:
    """Numeric feature standardization plus one-hot vocabularies (with a
    reserved out-of-vocabulary slot each) fitted on training-fold rows."""

    pos_vocab: tuple[str, ...]
    dep_vocab: tuple[str, ...]
    numeric_norm: NormStats

    @property
    def width(self) -> int:
        return 4 + len(self.pos_vocab) + 1 + len(self.dep_vocab) + 1


def _numeric_features(row: LinguisticFeatureRow) -> np.ndarray:
    return np.array(
        [
            row.surprisal,
            float(row.head_dist),
            np.log10(row.char_freq + 1.0),
            np.log10(row.lex_freq + 1.0),
        ]
    )


def fit_manual_encoder(table: FeatureTable, positions: Sequence[Position]) -> ManualEncoder:
    rows = [table[p] for p in sorted(set(positions))]
    if not rows:
        raise ValueError("no training positions for the manual feature encoder")
    pos_vocab = tuple(sorted({r.pos_tag for r in rows}))
    dep_vocab = tuple(sorted({r.dep_rel for r in rows}))
    numeric = np.stack([_numeric_features(r) for r in rows])
    return ManualEncoder(pos_vocab, dep_vocab, fit_normalizer([numeric]))


def encode_manual_features(enc: ManualEncoder, row: LinguisticFeatureRow) -> np.ndarray:
    """Encode one word: z-scored numeric block, then one-hot part-of-speech
    and dependency-relation blocks. Unknown categories go to the OOV slot."""
    numeric = apply_normalizer(enc.numeric_norm, [_numeric_features(row)[None, :]])[0][0]
    pos_block = np.zeros(len(enc.pos_vocab) + 1)
    pos_block[enc.pos_vocab.index(row.pos_tag) if row.pos_tag in enc.pos_vocab else -1] = 1.0
    dep_block = np.zeros(len(enc.dep_vocab) + 1)
    dep_block[enc.dep_vocab.index(row.dep_rel) if row.dep_rel in enc.dep_vocab else -1] = 1.0
    return np.concatenate([numeric, pos_block, dep_block])


# ---------------------------------------------------------------------------
# the fitted stimulus representation and sequence enrichment
# ---------------------------------------------------------------------------


@dataclass
class StimulusRepr:
    """A tagged, fitted representation choice carrying its artifacts and
    the sidecar tables needed to look words up at enrichment time."""

    kind: str
    pca: PcaModel | None = None
    encoder: MeanDiffEncoder | None = None
    manual: ManualEncoder | None = None
    embeddings: EmbeddingTable | None = None
    features: FeatureTable | None = None

    @property
    def repr_width(self) -> int:
        if self.kind == REPR_NONE:
            return 0
        if self.kind in (REPR_PCA, REPR_MEANDIFF):
            return PCA_COMPONENTS if self.kind == REPR_PCA else ENCODER_HIDDEN
        return self.manual.width

    @property
    def enriched_width(self) -> int:
        return N_MEASURES + self.repr_width

    def word_vector(self, pos: Position) -> np.ndarray:
        if self.kind == REPR_PCA:
            return project_pca(self.pca, self.embeddings[pos])
        if self.kind == REPR_MEANDIFF:
            return encode_meandiff(self.encoder, self.embeddings[pos])
        if self.kind == REPR_MANUAL:
            return encode_manual_features(self.manual, self.features[pos])
        return np.zeros(0)


def fit_stimulus(
    kind: str,
    trials: Sequence[Trial],
    labels_by_subject: dict[str, int],
    embeddings: EmbeddingTable | None = None,
    features: FeatureTable | None = None,
    meandiff_config: MeanDiffTrainConfig | None = None,
) -> StimulusRepr:
    """Fit the chosen representation's artifacts on training-fold trials."""
    if kind not in REPR_KINDS:
        raise ValueError(f"unknown stimulus representation {kind!r}")
    if kind == REPR_NONE:
        return StimulusRepr(REPR_NONE)
    positions = sorted({(t.sentence_id, k) for t in trials for k in range(t.measures.shape[0])})
    if kind == REPR_PCA:
        if embeddings is None:
            raise ValueError("PCA representation requires an embedding table")
        return StimulusRepr(kind, pca=fit_pca(embeddings, positions), embeddings=embeddings)
    if kind == REPR_MEANDIFF:
        if embeddings is None:
            raise ValueError("mean-difference representation requires an embedding table")
        enc = fit_meandiff_encoder(embeddings, trials, labels_by_subject, meandiff_config)
        return StimulusRepr(kind, encoder=enc, embeddings=embeddings)
    if features is None:
        raise ValueError("manual representation requires a linguistic feature table")
    return StimulusRepr(kind, manual=fit_manual_encoder(features, positions), features=features)


def build_enriched_sequences(
    trials: Sequence[Trial], repr_: StimulusRepr, norm: NormStats
) -> list[np.ndarray]:
    """Per-trial enriched sequences: each word vector is the z-scored
    reading measures concatenated with the representation vector for that
    word position. Skipped words keep their (normalized all-zero) measures
    and still receive their position's representation, preserving
    alignment. Embedding-derived units pass through un-rescaled."""
    cache: dict[Position, np.ndarray] = {}
    out = []
    for t in trials:
        base = apply_normalizer(norm, [t.measures])[0]
        if repr_.kind == REPR_NONE:
            out.append(base)
            continue
        rows = []
        for k in range(t.measures.shape[0]):
            pos = (t.sentence_id, k)
            if pos not in cache:
                cache[pos] = repr_.word_vector(pos)
            rows.append(cache[pos])
        out.append(np.concatenate([base, np.stack(rows)], axis=1))
    widths = {o.shape[1] for o in out}
    if len(widths) > 1:
        raise ValueError(f"inconsistent enriched widths {sorted(widths)}")
    return out
