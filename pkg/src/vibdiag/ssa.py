"""Fisher-based spectral separability analysis.

Per class and sensor, smoothed dB spectra are summarised by their per-bin
mean and variance. Each class pair is scored bin-wise with the Fisher ratio
``|mu_i - mu_j|^2 / (var_i + var_j)``; bins at or below a threshold are
zeroed, the rest are Gaussian-smoothed, and contiguous positive runs are
reported as separable frequency bands.
"""
from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .dsp import SegmentTensor, smooth, smoothed_psd_batch
from .signals import HealthState


@dataclass
class ClassSpectrumStats:
    class_id: int
    sensor: int
    frequencies_hz: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    n_segments: int

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.var)


def class_spectrum_stats(segments, class_id: int = 0, sensor: int = 0, nfft: int = 1024,
                         smooth_len: int = 16, sample_rate_hz: float = 1.0) -> ClassSpectrumStats:
    """Mean and population variance of the smoothed dB spectra of ``segments`` (shape ``(P, L)``)."""
    segments = np.asarray(segments, dtype=np.float64)
    if segments.ndim != 2 or segments.shape[0] < 2:
        raise ValueError("need a (P, L) array with at least 2 segments")
    psd = smoothed_psd_batch(segments, nfft, smooth_len)
    return ClassSpectrumStats(int(class_id), int(sensor), np.fft.rfftfreq(nfft, 1.0 / sample_rate_hz),
                              psd.mean(axis=0), psd.var(axis=0), segments.shape[0])


def fisher_curve(stats_i: ClassSpectrumStats, stats_j: ClassSpectrumStats) -> np.ndarray:
    """Bin-wise Fisher ratio. Zero pooled variance gives 0 for equal means and
    ``+inf`` (a flagged bin) otherwise."""
    if stats_i.sensor != stats_j.sensor or not np.array_equal(stats_i.frequencies_hz,
                                                              stats_j.frequencies_hz):
        raise ValueError("stats must share sensor and frequency bins")
    gap = (stats_i.mean - stats_j.mean) ** 2
    pooled = stats_i.var + stats_j.var
    out = np.zeros_like(gap)
    ok = pooled > 0
    out[ok] = gap[ok] / pooled[ok]
    out[~ok & (gap > 0)] = np.inf
    return out


@dataclass
class Band:
    start_hz: float
    end_hz: float
    peak: float


@dataclass
class PairBands:
    fisher: np.ndarray
    zeta: np.ndarray
    bands: list[Band]
    flagged_hz: list[float]


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Inclusive ``(start, end)`` index pairs of the True runs in ``mask``."""
    padded = np.concatenate([[False], mask, [False]]).astype(np.int8)
    edges = np.flatnonzero(np.diff(padded))
    return [(int(a), int(b) - 1) for a, b in zip(edges[::2], edges[1::2])]


def separable_bands(curve, eps: float = 2.0, smooth_len: int = 64, bin_hz: float = 1.0,
                    frequencies_hz=None) -> PairBands:
    """Threshold at ``eps``, Gaussian-smooth, and report maximal runs where the result is positive.

    Non-finite bins are excluded from smoothing and returned in ``flagged_hz``.
    """
    curve = np.asarray(curve, dtype=np.float64)
    freqs = (np.arange(curve.size) * bin_hz if frequencies_hz is None
             else np.asarray(frequencies_hz, dtype=np.float64))
    finite = np.isfinite(curve)
    kept = np.where(finite & (curve > eps), curve, 0.0)
    zeta = smooth(kept, smooth_len) if smooth_len > 1 else kept
    zeta = np.maximum(zeta, 0.0)
    bands = [Band(float(freqs[a]), float(freqs[b]), float(zeta[a:b + 1].max()))
             for a, b in _runs(zeta > 0)]
    return PairBands(curve, zeta, bands, [float(f) for f in freqs[~finite]])


def overlap_for_threshold(eps: float) -> float:
    """Overlap coefficient of two equal-variance normals whose Fisher ratio is ``eps``.

    With unit variances the mean gap is ``sqrt(2 * eps)`` and the overlap is
    ``2 * Phi(-sqrt(eps / 2))``.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    return math.erfc(math.sqrt(eps / 2.0) / math.sqrt(2.0))


# ----------------------------------------------------------------- report

@dataclass
class SsaReport:
    eps: float
    nfft: int
    psd_smooth: int
    ssa_smooth: int
    sample_rate_hz: float
    frequencies_hz: np.ndarray
    stats: dict[tuple[int, int], ClassSpectrumStats] = field(default_factory=dict)  # (sensor, class)
    pairs: dict[tuple[int, int, int], PairBands] = field(default_factory=dict)  # (sensor, i, j)

    def bands(self, sensor: int, i: int, j: int) -> list[Band]:
        key = (sensor, min(i, j), max(i, j))
        return self.pairs[key].bands

    def as_dict(self) -> dict:
        def name(c):
            return HealthState(c).title if c < 4 else str(c)
        return {
            "eps": self.eps, "nfft": self.nfft, "psd_smooth": self.psd_smooth,
            "ssa_smooth": self.ssa_smooth, "sample_rate_hz": self.sample_rate_hz,
            "pairs": [
                {"sensor": s, "class_i": name(i), "class_j": name(j),
                 "bands": [vars(b) for b in pb.bands], "flagged_hz": pb.flagged_hz}
                for (s, i, j), pb in self.pairs.items()],
        }

    def write(self, out_dir) -> None:
        """JSON summary plus per-pair ``frequency_hz,fisher,zeta`` and per-class
        ``frequency_hz,mean_db,std_db`` CSVs."""
        from pathlib import Path
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "ssa_report.json", "w") as fh:
            json.dump(self.as_dict(), fh, indent=2)
        for (s, i, j), pb in self.pairs.items():
            with open(out / f"fisher_s{s}_{i}_{j}.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["frequency_hz", "fisher", "zeta"])
                for row in zip(self.frequencies_hz, pb.fisher, pb.zeta):
                    w.writerow([repr(float(v)) for v in row])
        for (s, c), st in self.stats.items():
            with open(out / f"psd_s{s}_class{c}.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["frequency_hz", "mean_db", "std_db"])
                for row in zip(st.frequencies_hz, st.mean, st.std):
                    w.writerow([repr(float(v)) for v in row])


def run_ssa(tensor: SegmentTensor, sensors=(0, 1), nfft: int = 1024, psd_smooth: int = 16,
            eps: float = 2.0, ssa_smooth: int = 64) -> SsaReport:
    """Full analysis over every unordered class pair present in ``tensor``."""
    classes = sorted(int(c) for c in np.unique(tensor.labels))
    freqs = np.fft.rfftfreq(nfft, 1.0 / tensor.sample_rate_hz)
    report = SsaReport(eps, nfft, psd_smooth, ssa_smooth, tensor.sample_rate_hz, freqs)
    for s in sensors:
        for c in classes:
            report.stats[(s, c)] = class_spectrum_stats(
                tensor.data[s, tensor.labels == c], c, s, nfft, psd_smooth, tensor.sample_rate_hz)
        for i, j in itertools.combinations(classes, 2):
            curve = fisher_curve(report.stats[(s, i)], report.stats[(s, j)])
            report.pairs[(s, i, j)] = separable_bands(curve, eps, ssa_smooth,
                                                      frequencies_hz=freqs)
    return report
