"""Confusion matrices, macro one-vs-all metrics and the inference-latency benchmark."""
from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from .dsp import standardize_array
from .model import ModelParams, forward, predict
from .signals import HealthState

METRIC_NAMES = ("accuracy", "precision", "recall", "f1")


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # rows: true class, columns: predicted

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 2 or self.counts.shape[0] != self.counts.shape[1]:
            raise ValueError("confusion matrix must be square")
        if np.any(self.counts < 0):
            raise ValueError("confusion counts must be nonnegative")

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_csv(self, path, names=None) -> None:
        names = names or [HealthState(i).title if i < 4 else str(i) for i in range(self.num_classes)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["true\\pred", *names])
            for name, row in zip(names, self.counts):
                w.writerow([name, *row.tolist()])


def confusion(predictions, labels, num_classes: int = 4) -> ConfusionMatrix:
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if predictions.shape != labels.shape:
        raise ValueError("predictions and labels differ in length")
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (labels, predictions), 1)
    return ConfusionMatrix(counts)


@dataclass
class MacroMetrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    flags: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in METRIC_NAMES}


def _ratio(num: float, den: float, flag: str, flags: list) -> float:
    if den == 0:
        flags.append(flag)
        return 0.0
    return num / den


def macro_metrics(cm: ConfusionMatrix) -> MacroMetrics:
    """One-vs-all accuracy, precision, recall and F1 averaged uniformly over classes.

    A ratio with a zero denominator (e.g. precision for a class that is never
    predicted) contributes 0 and is recorded in ``flags``.
    """
    c = cm.counts.astype(np.float64)
    total = c.sum()
    if total <= 0:
        raise ValueError("confusion matrix is empty")
    flags: list[str] = []
    acc = prec = rec = f1 = 0.0
    n = cm.num_classes
    for i in range(n):
        tp = c[i, i]
        fn = c[i].sum() - tp
        fp = c[:, i].sum() - tp
        tn = total - tp - fn - fp
        acc += (tp + tn) / total
        prec += _ratio(tp, tp + fp, f"precision_undefined:{i}", flags)
        rec += _ratio(tp, tp + fn, f"recall_undefined:{i}", flags)
        f1 += _ratio(2 * tp, 2 * tp + fn + fp, f"f1_undefined:{i}", flags)
    return MacroMetrics(acc / n, prec / n, rec / n, f1 / n, flags)


def metrics_from_predictions(predictions, labels, num_classes: int = 4) -> MacroMetrics:
    return macro_metrics(confusion(predictions, labels, num_classes))


# ------------------------------------------------------------------ latency

@dataclass
class LatencyStats:
    per_repetition_ms: list[float]
    mean_ms: float
    std_ms: float
    samples_per_repetition: int
    repetitions: int
    threads: int = 1
    mode: str = "single-segment"

    def real_time_factor(self, segment_duration_s: float) -> float:
        return self.mean_ms / (1e3 * segment_duration_s)

    def as_dict(self) -> dict:
        return asdict(self)


def _summarise(per_rep: list[float], n: int, threads: int, mode: str) -> LatencyStats:
    arr = np.asarray(per_rep)
    std = float(arr.std()) if arr.size > 1 else 0.0
    return LatencyStats([float(v) for v in arr], float(arr.mean()), std, n, len(per_rep),
                        threads, mode)


def latency_bench(params: ModelParams, samples, repetitions: int = 10,
                  threads: int = 1) -> LatencyStats:
    """Wall-clock time to standardise and classify one raw segment at a time.

    ``samples`` is ``(n, L, 2)``. Each repetition runs every sample once and
    reports its mean per-sample time in milliseconds.
    """
    samples = np.asarray(samples, dtype=params.dtype)
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    if samples.ndim != 3 or len(samples) == 0:
        raise ValueError("samples must be a nonempty (n, L, 2) array")
    per_rep = []
    with threadpool_limits(limits=threads):
        forward(params, standardize_array(samples[:1]))  # warm-up
        for _ in range(repetitions):
            elapsed = 0.0
            for seg in samples:
                t0 = time.perf_counter()
                z = standardize_array(seg[None])
                int(forward(params, z)[0].argmax())
                elapsed += time.perf_counter() - t0
            per_rep.append(1e3 * elapsed / len(samples))
    return _summarise(per_rep, len(samples), threads, "single-segment")


def throughput_bench(params: ModelParams, samples, repetitions: int = 3,
                     batch_size: int = 100, threads: int | None = None) -> LatencyStats:
    """Batched multi-threaded throughput, reported as amortised ms per segment."""
    samples = np.asarray(samples, dtype=params.dtype)
    per_rep = []
    with threadpool_limits(limits=threads):
        for _ in range(repetitions):
            t0 = time.perf_counter()
            predict(params, standardize_array(samples), batch_size=batch_size)
            per_rep.append(1e3 * (time.perf_counter() - t0) / len(samples))
    return _summarise(per_rep, len(samples), threads or 0, "batched-throughput")


# ------------------------------------------------------------------ reports

@dataclass
class EvalReport:
    confusion: ConfusionMatrix
    metrics: MacroMetrics
    latency: LatencyStats | None = None

    @classmethod
    def from_predictions(cls, predictions, labels, num_classes: int = 4) -> "EvalReport":
        cm = confusion(predictions, labels, num_classes)
        return cls(cm, macro_metrics(cm))

    def as_dict(self) -> dict:
        return {"confusion": self.confusion.counts.tolist(),
                "metrics": self.metrics.as_dict(),
                "flags": list(self.metrics.flags),
                "latency": None if self.latency is None else self.latency.as_dict()}

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.as_dict(), fh, indent=2)


def aggregate(reports) -> dict[str, tuple[float, float]]:
    """Mean and population standard deviation of each macro metric across folds."""
    reports = list(reports)
    out = {}
    for name in METRIC_NAMES:
        vals = np.array([getattr(r.metrics, name) for r in reports])
        out[name] = (float(vals.mean()), float(vals.std()))
    return out


def mean_confusion(reports) -> np.ndarray:
    return np.mean([r.confusion.counts for r in reports], axis=0)


def format_table(summaries: dict[str, dict[str, tuple[float, float]]]) -> str:
    """Metrics as rows, conditions as columns, cells ``mean ± std`` in percent."""
    cols = list(summaries)
    lines = ["| Metric | " + " | ".join(cols) + " |",
             "|---" * (len(cols) + 1) + "|"]
    for name in METRIC_NAMES:
        label = "F1-Score" if name == "f1" else name.title()
        cells = [f"{100 * summaries[c][name][0]:.1f} ± {100 * summaries[c][name][1]:.1f}"
                 for c in cols]
        lines.append(f"| {label} | " + " | ".join(cells) + " |")
    return "\n".join(lines)
