"""Vibration-based bearing fault diagnosis with a compact numpy 1-D CNN and
Fisher spectral separability analysis."""
from .signals import HealthState, MultiSensorRecord, SpeedTrace, SynthConfig
from .dsp import NoiseSpec, PsdCurve, SegmentTensor
from .model import ModelConfig, ModelParams, AdamState
from .training import FoldPlan, TrainSchedule
from .ssa import ClassSpectrumStats, SsaReport
from .evaluation import ConfusionMatrix, EvalReport, LatencyStats

__all__ = [
    "HealthState", "MultiSensorRecord", "SpeedTrace", "SynthConfig",
    "NoiseSpec", "PsdCurve", "SegmentTensor",
    "ModelConfig", "ModelParams", "AdamState",
    "FoldPlan", "TrainSchedule",
    "ClassSpectrumStats", "SsaReport",
    "ConfusionMatrix", "EvalReport", "LatencyStats",
]
