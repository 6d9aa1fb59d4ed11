"""AICAU: active-learning benchmark lab for noisy regression oracles.

Bias- and cobias-driven acquisition strategies (including eigendecomposition
batching) evaluated against simulated oracles with none, uncorrelated, or
correlated heteroskedastic noise, tracked by ground-truth MSE over seeded
replicates.
"""

__version__ = "0.1.0"
