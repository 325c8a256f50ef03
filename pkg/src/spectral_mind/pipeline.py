"""Stage composition shared by the CLI subcommands and the single-shot run."""
from __future__ import annotations

from .dsp import PreprocessConfig, preprocess
from .eegio import EpochSet, Recording, SpectrogramSet
from .ersp import ErspConfig, build_dataset


def epochs_from_recordings(recs: list[Recording], cfg: PreprocessConfig) -> list[EpochSet]:
    return [preprocess(r, cfg) for r in recs]


def features_from_epochs(epochs: list[EpochSet], cfg: ErspConfig) -> SpectrogramSet:
    if not epochs:
        raise ValueError("no epoch sets given")
    return SpectrogramSet.concatenate([build_dataset(e, cfg) for e in epochs])


def features_from_recordings(recs: list[Recording], pre: PreprocessConfig, ersp: ErspConfig) -> SpectrogramSet:
    return features_from_epochs(epochs_from_recordings(recs, pre), ersp)
