"""featclash: a benchmark harness for counterexample data augmentation.

Synthetic binary sequence classification where an easy ("weak") feature
co-occurs with a label-determining ("strong") feature, a from-scratch
trainable LSTM classifier, four-region error decomposition, a feature
hardness probe, and reproducible experiment sweeps.
"""

__version__ = "0.1.0"
