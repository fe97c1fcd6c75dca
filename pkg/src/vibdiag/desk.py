"""Desk-scale regime: a scaled-down surrogate of the full pipeline that trains
in minutes on one CPU core.

Records are synthesised at 6.4 kHz and resampled to 5 kHz (the same 25/32
ratio as 25.6 kHz to 20 kHz), so a 500-sample segment still spans 100 ms.
The network keeps the block structure, kernel sizes, pooling and dropout of
the full model but uses 16 filters and 64 dense units.
"""
from __future__ import annotations

from .dsp import SegmentTensor
from .model import ModelConfig
from .signals import HealthState, SynthConfig, synth_record
from .training import TrainSchedule, assemble_dataset

SOURCE_HZ = 6400.0
TARGET_HZ = 5000.0
SEGMENT_LEN = 500
SEGMENTS_PER_CLASS = 400


def synth_config(seed: int = 0, segments_per_class: int = SEGMENTS_PER_CLASS) -> SynthConfig:
    duration = segments_per_class * SEGMENT_LEN / TARGET_HZ
    return SynthConfig(sample_rate_hz=SOURCE_HZ, resonance_hz=1500.0, resonance_hz_y=2000.0,
                       duration_s=duration,
                       speed_profile=((0.0, 680.0), (duration / 2, 2460.0), (duration, 680.0)),
                       seed=seed)


def model_config() -> ModelConfig:
    return ModelConfig(input_length=SEGMENT_LEN, filters_per_block=16, dense_units=64)


def schedule(epochs: int = 30, seed: int = 0) -> TrainSchedule:
    return TrainSchedule(epochs=epochs, batch_size=32, lr_phase1=1e-3, lr_phase2=1e-3,
                         lr_switch_epoch=epochs, shuffle_seed=seed)


def records(seed: int = 0, segments_per_class: int = SEGMENTS_PER_CLASS):
    cfg = synth_config(seed, segments_per_class)
    return [synth_record(cfg, s)[0] for s in HealthState]


def dataset(snr="clean", seed: int = 0, segments_per_class: int = SEGMENTS_PER_CLASS) -> SegmentTensor:
    return assemble_dataset(records(seed, segments_per_class), [snr], SEGMENT_LEN, TARGET_HZ,
                            seed=seed)
