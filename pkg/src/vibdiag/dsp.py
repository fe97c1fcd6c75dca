"""Preprocessing mathematics: resampling, calibrated noise, segmentation,
standardisation, smoothed PSDs and nonuniform-Fourier speed analysis."""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import signal as sp_signal

from .signals import HealthState, MultiSensorRecord, SpeedTrace

MAX_RATIO_TERM = 1024


# ------------------------------------------------------------------ types

@dataclass
class SegmentTensor:
    """Segmented signal of shape ``(2, P, L)`` with one label per segment."""
    data: np.ndarray
    sample_rate_hz: float
    labels: np.ndarray
    standardized: bool = False

    def __post_init__(self):
        self.data = np.asarray(self.data)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.data.ndim != 3 or self.data.shape[0] != 2:
            raise ValueError(f"segment tensor must be 2 x P x L, got {self.data.shape}")
        if self.data.shape[1] < 1 or self.data.shape[2] < 1:
            raise ValueError("segment tensor needs P >= 1 and L >= 1")
        if self.labels.shape != (self.data.shape[1],):
            raise ValueError("need exactly one label per segment")

    @property
    def n_segments(self) -> int:
        return self.data.shape[1]

    @property
    def segment_len(self) -> int:
        return self.data.shape[2]

    def as_batch(self) -> np.ndarray:
        """Model input layout ``(P, L, 2)``."""
        return np.ascontiguousarray(self.data.transpose(1, 2, 0))

    def take(self, idx) -> "SegmentTensor":
        idx = np.asarray(idx)
        return SegmentTensor(self.data[:, idx], self.sample_rate_hz, self.labels[idx],
                             self.standardized)

    @classmethod
    def concat(cls, parts) -> "SegmentTensor":
        parts = list(parts)
        if not parts:
            raise ValueError("nothing to concatenate")
        rates = {p.sample_rate_hz for p in parts}
        flags = {p.standardized for p in parts}
        if len(rates) > 1 or len(flags) > 1:
            raise ValueError("cannot concatenate tensors with differing rate/standardisation")
        return cls(np.concatenate([p.data for p in parts], axis=1), rates.pop(),
                   np.concatenate([p.labels for p in parts]), flags.pop())


@dataclass
class NoiseSpec:
    """``snr_db`` is a number or the string ``"clean"``; ``seed`` is any
    entropy accepted by :class:`numpy.random.SeedSequence`."""
    snr_db: float | str = "clean"
    seed: int | tuple = 0

    @property
    def is_clean(self) -> bool:
        return isinstance(self.snr_db, str) and self.snr_db.lower() == "clean"

    @classmethod
    def parse(cls, text, seed=0) -> "NoiseSpec":
        if isinstance(text, str) and text.strip().lower() == "clean":
            return cls("clean", seed)
        return cls(float(text), seed)


@dataclass
class PsdCurve:
    frequencies_hz: np.ndarray
    power_db: np.ndarray

    def __post_init__(self):
        self.frequencies_hz = np.asarray(self.frequencies_hz, dtype=np.float64)
        self.power_db = np.asarray(self.power_db, dtype=np.float64)
        if self.frequencies_hz.shape != self.power_db.shape:
            raise ValueError("frequency and power arrays differ in length")
        if np.any(self.frequencies_hz < 0) or np.any(np.diff(self.frequencies_hz) <= 0):
            raise ValueError("frequencies must be nonnegative and strictly increasing")

    @property
    def power_linear(self) -> np.ndarray:
        return 10.0 ** (self.power_db / 10.0)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["frequency_hz", "power_db"])
            for f, p in zip(self.frequencies_hz, self.power_db):
                w.writerow([repr(float(f)), repr(float(p))])


def _to_db(power: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(power)


# ------------------------------------------------------------- resampling

def rational_ratio(target_hz: float, source_hz: float, max_term: int = MAX_RATIO_TERM) -> tuple[int, int]:
    if not target_hz > 0 or not source_hz > 0:
        raise ValueError("sample rates must be positive")
    exact = target_hz / source_hz
    frac = Fraction(exact).limit_denominator(max_term)
    if frac.numerator > max_term or abs(float(frac) - exact) > 1e-9 * exact:
        raise ValueError(
            f"rate ratio {target_hz}/{source_hz} is not p/q with p, q <= {max_term}")
    return frac.numerator, frac.denominator


def design_resampling_filter(up: int, down: int, stopband_db: float = 80.0) -> np.ndarray:
    """Kaiser-windowed sinc for rational resampling, in the upsampled domain.

    Passband edge at 0.8 and stopband edge at 1.0 of the lower Nyquist rate.
    The length is forced odd so the filter has an integer group delay.
    """
    band = 1.0 / max(up, down)
    numtaps, beta = sp_signal.kaiserord(stopband_db, 0.2 * band)
    numtaps |= 1
    return sp_signal.firwin(numtaps, 0.9 * band, window=("kaiser", beta)) * up


def _resample_channel(x: np.ndarray, up: int, down: int, h: np.ndarray) -> np.ndarray:
    n = len(x)
    n_out = n * up // down
    delay = (len(h) - 1) // 2
    # odd reflection at both ends keeps constants and ramps free of edge droop
    ext = min(n - 1, len(h) // up + 2)
    if ext > 0:
        head = 2 * x[0] - x[ext:0:-1]
        tail = 2 * x[-1] - x[-2:-ext - 2:-1]
        xe = np.concatenate([head, x, tail])
    else:
        xe = x
    shift = ext * up + delay
    pre = (-shift) % down
    hp = np.concatenate([np.zeros(pre), h])
    # each polyphase branch gets unit DC gain
    for phase in range(up):
        branch = hp[phase::up]
        s = branch.sum()
        if s != 0:
            hp[phase::up] = branch / s
    y = sp_signal.upfirdn(hp, xe, up, down)
    start = (shift + pre) // down
    out = y[start:start + n_out]
    if len(out) < n_out:
        out = np.concatenate([out, np.zeros(n_out - len(out))])
    return out


def resample(record: MultiSensorRecord, target_hz: float) -> MultiSensorRecord:
    """Polyphase rational resampling with an anti-aliasing FIR and delay compensation.

    Output length is ``floor(N * p / q)``. A ratio of 1 returns the input
    channels untouched.
    """
    if not target_hz > 0:
        raise ValueError(f"target rate must be positive, got {target_hz}")
    up, down = rational_ratio(target_hz, record.sample_rate_hz)
    if up == down:
        return record.with_channels(record.channels.copy())
    if record.n_samples * up // down < 1:
        raise ValueError("record too short to resample")
    h = design_resampling_filter(up, down)
    out = np.stack([_resample_channel(ch, up, down, h) for ch in record.channels])
    return record.with_channels(out, float(target_hz))


# -------------------------------------------------------------------- noise

def noise_alpha(channel, snr_db: float) -> float:
    """Noise gain giving the requested SNR relative to the channel's mean power."""
    channel = np.asarray(channel, dtype=np.float64)
    if channel.size == 0:
        raise ValueError("channel is empty")
    power = np.mean(channel ** 2)
    if power == 0:
        warnings.warn("adding noise to an all-zero channel: alpha is 0", RuntimeWarning,
                      stacklevel=2)
        return 0.0
    return math.sqrt(10.0 ** (-snr_db / 10.0) * power)


def channel_rng(seed, channel: int) -> np.random.Generator:
    entropy = [int(s) for s in np.atleast_1d(seed)] + [int(channel)]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def add_noise(record: MultiSensorRecord, spec: NoiseSpec) -> MultiSensorRecord:
    """``x_q = s_q + alpha_q * eta_q`` with an independent standard-normal stream per channel."""
    if spec.is_clean:
        return record
    out = np.empty_like(record.channels)
    for q, ch in enumerate(record.channels):
        eta = channel_rng(spec.seed, q).standard_normal(ch.size)
        out[q] = ch + noise_alpha(ch, float(spec.snr_db)) * eta
    return record.with_channels(out)


# ------------------------------------------------ segmentation / z-scoring

def segment(record: MultiSensorRecord, L: int) -> SegmentTensor:
    """Non-overlapping length-``L`` segments; a trailing remainder is dropped."""
    L = int(L)
    if L < 1:
        raise ValueError("segment length must be positive")
    n = record.n_samples
    if n < L:
        raise ValueError(f"record has {n} samples, fewer than segment length {L}")
    P = n // L
    data = record.channels[:, :P * L].reshape(2, P, L).copy()
    return SegmentTensor(data, record.sample_rate_hz, np.full(P, int(record.label)))


def standardize_array(data: np.ndarray) -> np.ndarray:
    """z-score each segment over both channels flattened.

    Accepts ``(2, P, L)`` or a model batch ``(B, L, 2)``; returns the same layout.
    """
    if data.ndim == 3 and data.shape[0] == 2 and data.shape[-1] != 2:
        axes = (0, 2)
    elif data.ndim == 3:
        axes = (1, 2)
    else:
        raise ValueError(f"unsupported layout {data.shape}")
    mu = data.mean(axis=axes, keepdims=True)
    sigma = data.std(axis=axes, keepdims=True)
    bad = np.flatnonzero(sigma.ravel() == 0)
    if bad.size:
        raise ValueError(f"segment {int(bad[0])} has zero variance; cannot standardise")
    return (data - mu) / sigma


def standardize(t: SegmentTensor) -> SegmentTensor:
    if t.standardized:
        raise ValueError("tensor is already standardised")
    mu = t.data.mean(axis=(0, 2), keepdims=True)
    sigma = t.data.std(axis=(0, 2), keepdims=True)
    bad = np.flatnonzero(sigma.ravel() == 0)
    if bad.size:
        raise ValueError(f"segment {int(bad[0])} has zero variance; cannot standardise")
    return SegmentTensor((t.data - mu) / sigma, t.sample_rate_hz, t.labels, True)


# ---------------------------------------------------------------------- PSD

def gaussian_window(length: int) -> np.ndarray:
    """Unit-sum symmetric Gaussian, nonzero for ``|k| <= length // 2``, sigma = length / 6."""
    length = int(length)
    if length < 1:
        raise ValueError("window length must be >= 1")
    half = length // 2
    if half == 0:
        return np.ones(1)
    k = np.arange(-half, half + 1)
    w = np.exp(-0.5 * (k / (length / 6.0)) ** 2)
    return w / w.sum()


def smooth(values: np.ndarray, length: int) -> np.ndarray:
    """Gaussian-weighted moving average along the last axis.

    Near the ends the window is truncated and renormalised, so constants are
    preserved everywhere.
    """
    w = gaussian_window(length)
    if w.size == 1:
        return np.array(values, dtype=np.float64, copy=True)
    values = np.asarray(values, dtype=np.float64)
    n, half = values.shape[-1], w.size // 2
    # full convolution then slicing also covers windows longer than the input
    num = sp_signal.convolve(values, w.reshape((1,) * (values.ndim - 1) + (-1,)), mode="full")
    den = np.convolve(np.ones(n), w, mode="full")
    return num[..., half:half + n] / den[half:half + n]


def periodogram(segment, nfft: int = 1024) -> np.ndarray:
    """One-sided ``|FFT|^2 / (L - 1)``; ``L`` is the number of samples actually transformed."""
    x = np.asarray(segment, dtype=np.float64)
    n_used = min(x.shape[-1], nfft)
    if n_used < 2:
        raise ValueError("need at least 2 samples")
    spec = np.fft.rfft(x[..., :n_used], n=nfft, axis=-1)
    return np.abs(spec) ** 2 / (n_used - 1)


def smoothed_psd(segment, nfft: int = 1024, smooth_len: int = 16,
                 sample_rate_hz: float = 1.0) -> PsdCurve:
    """Gaussian-smoothed periodogram in dB over ``nfft // 2 + 1`` bins.

    Segments longer than ``nfft`` are truncated to their first ``nfft`` samples.
    """
    if nfft < 2:
        raise ValueError("nfft must be >= 2")
    if smooth_len < 1 or smooth_len > nfft:
        raise ValueError(f"smooth_len must lie in [1, nfft], got {smooth_len}")
    x = np.asarray(segment, dtype=np.float64).ravel()
    if x.size < 2:
        raise ValueError("segment must contain at least 2 samples")
    power = smooth(periodogram(x, nfft), smooth_len)
    return PsdCurve(np.fft.rfftfreq(nfft, 1.0 / sample_rate_hz), _to_db(power))


def smoothed_psd_batch(segments: np.ndarray, nfft: int = 1024, smooth_len: int = 16) -> np.ndarray:
    """Vectorised :func:`smoothed_psd` over the rows of ``segments`` (dB values only)."""
    if smooth_len < 1 or smooth_len > nfft:
        raise ValueError(f"smooth_len must lie in [1, nfft], got {smooth_len}")
    return _to_db(smooth(periodogram(segments, nfft), smooth_len))


# ----------------------------------------------------------- speed analysis

def nuft_psd(trace: SpeedTrace, f_scale_hz: float = 12.5, f_max_hz: float | None = None) -> PsdCurve:
    """Direct nonuniform DFT periodogram of the mean-removed rpm series.

    Frequencies are spaced ``f_scale_hz / N`` apart from 0 up to ``f_max_hz``
    (default ``f_scale_hz / 2``); with uniform timestamps at ``1 / f_scale_hz``
    this is exactly the DFT periodogram ``|X|^2 / N``.
    """
    t = np.asarray(trace.timestamps, dtype=np.float64)
    n = len(t)
    if n < 8:
        raise ValueError(f"need at least 8 speed samples, got {n}")
    if np.any(np.diff(t) <= 0):
        raise ValueError("timestamps must be strictly increasing")
    if not f_scale_hz > 0:
        raise ValueError("f_scale_hz must be positive")
    f_max = f_scale_hz / 2 if f_max_hz is None else float(f_max_hz)
    df = f_scale_hz / n
    freqs = np.arange(int(np.floor(f_max / df + 1e-9)) + 1) * df
    x = trace.rpm - trace.rpm.mean()
    t0 = t - t[0]
    spectrum = np.exp(-2j * np.pi * np.outer(freqs, t0)) @ x
    power = np.abs(spectrum) ** 2 / n
    return PsdCurve(freqs, _to_db(power))


def power_fraction_below(psd: PsdCurve, f_cut_hz: float) -> float:
    """Share of linear power at frequencies ``<= f_cut_hz`` (1.0 for an all-zero spectrum)."""
    if psd.power_db.size == 0:
        raise ValueError("empty PSD")
    p = psd.power_linear
    total = p.sum()
    if total == 0:
        return 1.0
    return float(p[psd.frequencies_hz <= f_cut_hz].sum() / total)


def segment_length_for_rate(f_max_hz: float, sample_rate_hz: float) -> int:
    if not f_max_hz > 0 or not sample_rate_hz > 0:
        raise ValueError("frequencies must be positive")
    return int(round(sample_rate_hz / f_max_hz))
