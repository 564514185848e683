"""Pinned configuration behind the golden sweep fixtures."""
from symcorr.lab.synth import PoolSpec

GOLDEN_KWARGS = dict(
    template=PoolSpec(tokens_per_layer=(16, 64, 256), seed=11),
    n_values=(1, 2, 5, 33),
    seeds=(11, 12),
)
