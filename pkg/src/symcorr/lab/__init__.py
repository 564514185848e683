from .fts import read_features, read_mask, write_features, write_mask
from .providers import FeatureProvider, FileProvider, SyntheticProvider
from .report import emit_report
from .sweep import ModelSpec, SweepResult, SweepRow, dilution_sweep, dilution_trials
from .synth import PoolSpec, episode_digest, synth_pool

__all__ = [
    "FeatureProvider",
    "FileProvider",
    "ModelSpec",
    "PoolSpec",
    "SweepResult",
    "SweepRow",
    "SyntheticProvider",
    "dilution_sweep",
    "dilution_trials",
    "emit_report",
    "episode_digest",
    "read_features",
    "read_mask",
    "synth_pool",
    "write_features",
    "write_mask",
]
