"""1-D Wasserstein DCGAN for synthesising vibration-signal windows, in pure numpy."""
from .data import SignalDataset, load_signal, sample_windows, synth_signal
from .evaluation import FidReport, box_stats, evaluate, fid_matrix, fid_score
from .model import GanModel, critic_forward, generate, generator_forward
from .training import TrainConfig, TrainLog, train

__version__ = "0.1.0"

__all__ = [
    "FidReport", "GanModel", "SignalDataset", "TrainConfig", "TrainLog",
    "box_stats", "critic_forward", "evaluate", "fid_matrix", "fid_score", "generate",
    "generator_forward", "load_signal", "sample_windows", "synth_signal", "train",
]
