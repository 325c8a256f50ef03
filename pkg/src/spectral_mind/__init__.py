"""Classify mental-arithmetic versus rest EEG from ERSP time-frequency images."""
from .config import PipelineConfig, load_config
from .dsp import PreprocessConfig, preprocess
from .eegio import EpochSet, Recording, SpectrogramSet
from .ersp import ErspConfig, build_dataset
from .synth import SynthConfig, generate
from .train import TrainConfig, train_model

__version__ = "0.1.0"

__all__ = [
    "PipelineConfig", "load_config", "PreprocessConfig", "preprocess", "EpochSet", "Recording",
    "SpectrogramSet", "ErspConfig", "build_dataset", "SynthConfig", "generate", "TrainConfig",
    "train_model", "__version__",
]
