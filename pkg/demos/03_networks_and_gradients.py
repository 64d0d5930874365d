"""Train the sequence classifiers on a toy problem and verify gradients.

The bidirectional LSTM mean-pools its per-step hidden states into a
single sigmoid unit; the CNN convolves across the word axis through two
conv/pool stages. Both are trained by mini-batch Adam on binary
cross-entropy with early stopping. Analytic gradients come from the
package's reverse-mode tape (plus a hand-derived backward pass for the
packed LSTM) and are checked against central finite differences.

Run: python demos/03_networks_and_gradients.py
"""
import numpy as np

from gazelens.networks import CnnConfig, FfnConfig, LstmConfig
from gazelens.training import TrainConfig, gradient_check, predict_proba, train_classifier

rng = np.random.default_rng(1)

# toy task: the sign of dimension 0's mean carries the label
seqs, labels = [], []
for i in range(40):
    label = i % 2
    seq = rng.normal(size=(int(rng.integers(5, 12)), 3))
    seq[:, 0] += 2.0 if label else -2.0
    seqs.append(seq)
    labels.append(float(label))
labels = np.array(labels)

print("gradient checks (analytic vs central finite differences):")
grad_lstm = gradient_check("lstm", LstmConfig(input_width=3, hidden_size=4),
                           seqs[:5], labels=labels[:5], seed=0)
print(f"  lstm (hidden 4):        max rel err {grad_lstm:.2e}")
cnn_cfg_small = CnnConfig(input_width=3, c1_channels=2, c1_kernel=3, c1_pool="max",
                          c2_channels=3, c2_kernel=3, c2_pool="average", l1_size=4, dropout=0.0)
grad_cnn = gradient_check("cnn", cnn_cfg_small, seqs[:5], labels=labels[:5], seed=0)
print(f"  cnn (2+3 channels):     max rel err {grad_cnn:.2e}")
xs = [rng.normal(size=5) for _ in range(6)]
grad_ffn = gradient_check("ffn", FfnConfig(input_width=5, hidden_size=3, output_width=2),
                          xs, targets=rng.normal(size=(6, 2)), seed=0)
print(f"  ffn (5 -> 3 -> 2):      max rel err {grad_ffn:.2e}")

print("\ntraining both classifiers to convergence on the toy task:")
tc = TrainConfig(batch_size=8, learning_rate=0.02, max_epochs=150, patience=25, seed=0)
for kind, cfg in (
    ("lstm", LstmConfig(input_width=3, hidden_size=20)),
    ("cnn", CnnConfig(input_width=3, c1_channels=5, c1_kernel=3, c1_pool="max",
                      c2_channels=10, c2_kernel=3, c2_pool="average", l1_size=10, dropout=0.1)),
):
    model = train_classifier(kind, cfg, seqs, labels, seqs, labels, tc)
    probs = predict_proba(model, seqs)
    acc = float(np.mean((probs >= 0.5) == labels))
    print(f"  {kind}: training accuracy {acc:.2f}, "
          f"mean p(dyslexic) for class 1 = {probs[labels == 1].mean():.3f}, "
          f"class 0 = {probs[labels == 0].mean():.3f}")
