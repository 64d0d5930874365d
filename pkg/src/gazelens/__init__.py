"""gazelens: dyslexia screening from word-level eye-movement reading
measures.

Library layout:

- ``corpus``     data model, CSV I/O, normalization, synthetic data
- ``stimulus``   per-word stimulus representations and sequence enrichment
- ``autodiff``   minimal reverse-mode differentiation over numpy arrays
- ``networks``   bidirectional LSTM, CNN and feed-forward architectures
- ``training``   mini-batch training with early stopping, gradient checks
- ``svm``        aggregate features, linear SVM, recursive feature elimination
- ``metrics``    ROC/AUC and threshold metrics
- ``evaluation`` fold construction, random search, nested cross-validation
- ``cli``        the ``gazelens`` command line entry point
"""

__version__ = "0.1.0"
