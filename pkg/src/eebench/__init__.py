"""Energy-expenditure regression from wearable signals: data, models, LOSO evaluation."""

from .catalog import CHANNEL_IDS, CHANNELS, NAMED_GROUPS, resolve_selection
from .dataset import SubjectRecording, load_dataset
from .evaluation import MetricsReport, pairwise_sweep, per_activity_eval, rmse, run_loso_experiment
from .models import ModelSpec, build_model
from .training import TrainConfig, train
from .windowing import WindowedDataset, make_windows

__version__ = "0.1.0"

__all__ = [
    "CHANNELS", "CHANNEL_IDS", "NAMED_GROUPS", "resolve_selection", "SubjectRecording", "load_dataset",
    "MetricsReport", "pairwise_sweep", "per_activity_eval", "rmse", "run_loso_experiment", "ModelSpec",
    "build_model", "TrainConfig", "train", "WindowedDataset", "make_windows",
]
