"""Stratified k-fold cross-validation, the two-phase training schedule and dataset assembly."""
from __future__ import annotations

import contextlib
import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from .dsp import NoiseSpec, SegmentTensor, add_noise, resample, segment, standardize
from .evaluation import EvalReport, aggregate
from .model import ModelConfig, ModelParams, adam_step, backward, build, forward, loss, predict
from .signals import MultiSensorRecord

log = logging.getLogger(__name__)


class TrainingDiverged(FloatingPointError):
    def __init__(self, epoch: int, batch: int, value: float):
        super().__init__(f"non-finite loss {value} at epoch {epoch}, batch {batch}")
        self.epoch, self.batch = epoch, batch


@dataclass
class TrainSchedule:
    epochs: int = 150
    batch_size: int = 100
    lr_phase1: float = 1e-5
    lr_phase2: float = 1e-6
    lr_switch_epoch: int = 101
    early_stopping: bool = False
    shuffle_seed: int = 0

    def __post_init__(self):
        if self.early_stopping:
            raise ValueError("early stopping is not supported; the last epoch's weights are used")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")

    def lr_at(self, epoch: int) -> float:
        """Learning rate for 1-based ``epoch``: phase 1 up to and including the switch epoch."""
        return self.lr_phase1 if epoch <= self.lr_switch_epoch else self.lr_phase2

    def lr_trace(self) -> list[float]:
        return [self.lr_at(e) for e in range(1, self.epochs + 1)]


@dataclass
class FoldPlan:
    folds: list[np.ndarray]
    histograms: np.ndarray  # (k, n_classes)
    seed: int = 0

    @property
    def k(self) -> int:
        return len(self.folds)

    def test_indices(self, i: int) -> np.ndarray:
        return self.folds[i]

    def train_indices(self, i: int) -> np.ndarray:
        return np.sort(np.concatenate([f for j, f in enumerate(self.folds) if j != i]))

    def as_dict(self) -> dict:
        return {"k": self.k, "seed": self.seed, "histograms": self.histograms.tolist(),
                "folds": [f.tolist() for f in self.folds]}

    @classmethod
    def from_dict(cls, d: dict) -> "FoldPlan":
        return cls([np.asarray(f, dtype=np.int64) for f in d["folds"]],
                   np.asarray(d["histograms"]), d.get("seed", 0))


def stratified_kfold(labels, k: int = 5, seed=0) -> FoldPlan:
    """Shuffle each class and deal its members round-robin across ``k`` folds.

    The dealing offset carries over from class to class so fold sizes stay
    within one of each other even when class counts are not divisible by ``k``.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if k < 2:
        raise ValueError("k must be >= 2")
    classes, counts = np.unique(labels, return_counts=True)
    if np.any(counts < k):
        raise ValueError(f"every class needs at least k={k} members, got {dict(zip(classes.tolist(), counts.tolist()))}")
    rng = np.random.default_rng(seed)
    assign = np.empty(labels.size, dtype=np.int64)
    offset = 0
    for c in classes:
        members = rng.permutation(np.flatnonzero(labels == c))
        assign[members] = (offset + np.arange(members.size)) % k
        offset = (offset + members.size) % k
    folds = [np.flatnonzero(assign == i) for i in range(k)]
    n_classes = int(classes.max()) + 1
    hist = np.array([np.bincount(labels[f], minlength=n_classes) for f in folds])
    return FoldPlan(folds, hist, seed if isinstance(seed, int) else 0)


@dataclass
class FoldResult:
    params: ModelParams
    report: EvalReport
    loss_curve: list[float]
    lr_trace: list[float]
    train_size: int = 0
    test_size: int = 0


def run_fold(train: SegmentTensor, test: SegmentTensor, schedule: TrainSchedule,
             model_cfg: ModelConfig, seed=0, on_epoch: Callable | None = None) -> FoldResult:
    """Train one model with per-epoch reshuffled minibatches, then evaluate the
    last-epoch weights on ``test`` with dropout disabled."""
    seed_seq = [int(s) for s in np.atleast_1d(seed)]
    params, state = build(model_cfg, seed=seed_seq)
    x = train.as_batch().astype(params.dtype)
    y = train.labels
    n = len(y)
    rng = np.random.default_rng(seed_seq + [int(schedule.shuffle_seed), 1])
    curve, lrs = [], []
    for epoch in range(1, schedule.epochs + 1):
        lr = schedule.lr_at(epoch)
        order = rng.permutation(n)
        total = 0.0
        n_batches = 0
        for b, start in enumerate(range(0, n, schedule.batch_size)):
            idx = order[start:start + schedule.batch_size]
            probs, cache = forward(params, x[idx], training=True,
                                   dropout_seed=seed_seq + [epoch, b])
            value = loss(probs, y[idx])
            if not np.isfinite(value):
                raise TrainingDiverged(epoch, b, value)
            adam_step(params, state, backward(params, cache, y[idx]), lr)
            total += value
            n_batches += 1
        curve.append(total / max(n_batches, 1))
        lrs.append(lr)
        if on_epoch is not None:
            on_epoch(epoch, curve[-1], lr)
        log.debug("epoch %d lr %.1e loss %.5f", epoch, lr, curve[-1])
    preds = predict(params, test.as_batch())
    report = EvalReport.from_predictions(preds, test.labels, model_cfg.num_classes)
    return FoldResult(params, report, curve, lrs, n, len(test.labels))


@dataclass
class CVResult:
    plan: FoldPlan
    folds: list[FoldResult]
    summary: dict[str, tuple[float, float]] = field(default_factory=dict)

    @property
    def reports(self) -> list[EvalReport]:
        return [f.report for f in self.folds]


def run_cv(dataset: SegmentTensor, k: int = 5, schedule: TrainSchedule | None = None,
           model_cfg: ModelConfig | None = None, seed: int = 0, deterministic: bool = True,
           on_fold: Callable | None = None) -> CVResult:
    """Train ``k`` independent models on stratified folds and aggregate their metrics."""
    schedule = schedule or TrainSchedule()
    model_cfg = model_cfg or ModelConfig(input_length=dataset.segment_len)
    plan = stratified_kfold(dataset.labels, k, seed)
    results = []
    guard = threadpool_limits(limits=1) if deterministic else contextlib.nullcontext()
    with guard:
        for i in range(k):
            train_idx, test_idx = plan.train_indices(i), plan.test_indices(i)
            if np.intersect1d(train_idx, test_idx).size:
                raise AssertionError(f"fold {i}: train and test indices overlap")
            res = run_fold(dataset.take(train_idx), dataset.take(test_idx), schedule,
                           model_cfg, seed=[seed, i])
            results.append(res)
            log.info("fold %d/%d accuracy %.4f", i + 1, k, res.report.metrics.accuracy)
            if on_fold is not None:
                on_fold(i, res)
    return CVResult(plan, results, aggregate(r.report for r in results))


# -------------------------------------------------------------- datasets

def preprocess_record(record: MultiSensorRecord, noise: NoiseSpec, segment_len: int,
                      target_hz: float | None = None) -> SegmentTensor:
    """Resample, add noise, segment and standardise, in that order."""
    if target_hz is not None and target_hz != record.sample_rate_hz:
        record = resample(record, target_hz)
    return standardize(segment(add_noise(record, noise), segment_len))


def assemble_dataset(records: Sequence[MultiSensorRecord], snr_levels: Sequence = ("clean",),
                     segment_len: int = 2000, target_hz: float | None = 20_000.0,
                     seed: int = 0) -> SegmentTensor:
    """Segments from every record at every SNR level.

    A single level gives the per-level datasets used for each noise condition;
    several levels give a mixed-SNR training pool. Each (level, record) pair
    draws its noise from its own seed stream.
    """
    parts = []
    for r, record in enumerate(records):
        if target_hz is not None and target_hz != record.sample_rate_hz:
            record = resample(record, target_hz)
        for lv, snr in enumerate(snr_levels):
            spec = NoiseSpec.parse(snr, seed=(seed, r, lv))
            parts.append(standardize(segment(add_noise(record, spec), segment_len)))
    return SegmentTensor.concat(parts)


def bookkeeping(n_samples: int, segment_len: int, n_classes: int = 4, k: int = 5) -> dict:
    """Segment and fold sizes implied by the recording length, without touching data."""
    per_class = n_samples // segment_len
    total = per_class * n_classes
    test = total // k
    return {"segments_per_class": per_class, "total_segments": total,
            "test_per_fold": test, "train_per_fold": total - test}
