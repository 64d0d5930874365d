"""Fit stimulus representations on a training split and enrich sequences.

Shows the four per-word representations and their widths: nothing (12),
PCA-reduced embeddings (12+20), mean-difference-encoded embeddings
(12+20), and manually extracted linguistic features (12+...). Everything
is fitted on the training split only; the held-out split is transformed
with the fitted artifacts.

Run: python demos/02_enrichment.py
"""
import numpy as np

from gazelens.corpus import SyntheticSpec, fit_normalizer, generate_synthetic
from gazelens.stimulus import (
    EMBED_DIM,
    EmbeddingTable,
    FeatureTable,
    LinguisticFeatureRow,
    MeanDiffTrainConfig,
    build_enriched_sequences,
    fit_stimulus,
)

ds = generate_synthetic(SyntheticSpec(n_subjects=12, n_dyslexic=6, n_sentences=10,
                                      retention_min=8, retention_max=10, seed=7))
labels = {s.subject_id: s.label for s in ds.subjects}

# synthetic sidecars standing in for precomputed embeddings and features
rng = np.random.default_rng(0)
positions = ds.word_positions()
embeddings = EmbeddingTable({p: rng.normal(size=EMBED_DIM) for p in positions})
tags = ("NOUN", "VERB", "ADJ")
features = FeatureTable({
    p: LinguisticFeatureRow(abs(rng.normal(3, 1.5)), tags[i % 3], "root", 0,
                            float(rng.lognormal(3, 1)), float(rng.lognormal(2, 1.5)))
    for i, p in enumerate(positions)
})

train_subjects = set(ds.subject_ids[:8])
train = [t for t in ds.trials if t.subject_id in train_subjects]
held = [t for t in ds.trials if t.subject_id not in train_subjects]
print(f"training trials: {len(train)}, held-out trials: {len(held)}")

# measure normalization is always fitted on the training split alone
norm = fit_normalizer([t.measures for t in train])

for kind in ("none", "pca", "meandiff", "manual"):
    repr_ = fit_stimulus(kind, train, labels, embeddings=embeddings, features=features,
                         meandiff_config=MeanDiffTrainConfig(epochs=50, seed=0))
    train_seqs = build_enriched_sequences(train, repr_, norm)
    held_seqs = build_enriched_sequences(held, repr_, norm)
    print(f"\nrepresentation {kind!r}: enriched width {repr_.enriched_width}")
    print(f"  example sequence shape {train_seqs[0].shape}")
    if kind == "pca":
        ev = repr_.pca.explained_variance
        print(f"  top-5 explained variances: {np.round(ev[:5], 2)}")
    flat = np.concatenate(train_seqs)[:, :12]
    print(f"  measure block after z-scoring: mean {flat.mean():+.2e}, std {flat.std():.3f}")
    held_flat = np.concatenate(held_seqs)[:, :12]
    print(f"  held-out measure block (train stats): mean {held_flat.mean():+.3f}")
