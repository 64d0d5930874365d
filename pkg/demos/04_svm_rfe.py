"""The reference method: aggregate features, linear SVM, and recursive
feature elimination.

Each instance is 24 numbers (mean and std of the 12 reading measures over
fixated words), either per subject or per trial. A linear soft-margin SVM
is trained by dual coordinate descent; elimination drops the feature with
the smallest absolute weight until one remains, and the retained subset
size is picked by a validation callback.

Run: python demos/04_svm_rfe.py
"""
import numpy as np

from gazelens.corpus import SyntheticSpec, fit_normalizer, generate_synthetic
from gazelens.metrics import roc_auc
from gazelens.svm import (
    FEATURE_NAMES,
    aggregate_features,
    rfe_rank,
    stack_instances,
    svm_decision,
    train_linear_svm,
)

ds = generate_synthetic(SyntheticSpec(seed=5))
instances = aggregate_features(ds, "subject")
print(f"subject-scope instances: {len(instances)} x {instances[0].features.shape[0]} features")

x, y = stack_instances(instances)
train_idx = np.arange(0, len(y), 2)
val_idx = np.arange(1, len(y), 2)
norm = fit_normalizer([x[train_idx]])
xs = (x - norm.mean) / norm.std

model = train_linear_svm(xs[train_idx], y[train_idx], C=1.0)
auc = roc_auc(svm_decision(model, xs[val_idx]), y[val_idx]).auc
print(f"all 24 features: validation AUC {auc:.3f} "
      f"(dual objective converged over {len(model.objective_history)} epochs)")


def inner_eval(subset):
    m = train_linear_svm(xs[np.ix_(train_idx, subset)], y[train_idx], C=1.0)
    return roc_auc(svm_decision(m, xs[np.ix_(val_idx, subset)]), y[val_idx]).auc


result = rfe_rank(xs[train_idx], y[train_idx], C=1.0, inner_eval=inner_eval)
print(f"\nselected {len(result.selected)} features by recursive elimination:")
for i in result.selected:
    print(f"  {FEATURE_NAMES[i]}")
print("\nvalidation AUC by nested subset size:")
for size in sorted(result.scores_by_size):
    marker = " <- selected" if size == len(result.selected) else ""
    print(f"  {size:2d} features: {result.scores_by_size[size]:.3f}{marker}")
