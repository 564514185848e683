"""Feature providers: where an episode's token features come from."""
from __future__ import annotations

from pathlib import Path
from typing import Protocol

from ..segmenter.types import Episode
from .fts import load_episode
from .synth import PoolSpec, synth_pool


class FeatureProvider(Protocol):
    def episode(self) -> Episode: ...


class SyntheticProvider:
    def __init__(self, spec: PoolSpec):
        self.spec = spec

    def episode(self) -> Episode:
        return synth_pool(self.spec)


class FileProvider:
    """Reads an episode directory written by :func:`symcorr.lab.fts.save_episode`."""

    def __init__(self, directory):
        self.directory = Path(directory)

    def episode(self) -> Episode:
        return load_episode(self.directory)
