"""Labelled vibration records, file ingestion and a synthetic bearing-signal generator.

Two on-disk layouts are supported:

``csv``
    One row per time sample with columns ``ch_x,ch_y`` (an optional header
    row with exactly those names is skipped). Sample rate and label come from
    a ``<name>.json`` sidecar when present, otherwise from keyword arguments.
``raw``
    Little-endian float32, interleaved ``[x0, y0, x1, y1, ...]``, with a
    mandatory ``<name>.json`` sidecar holding ``sample_rate_hz``, ``label``
    and ``channels``.
"""
from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import signal as sp_signal

LAYOUTS = ("csv", "raw")
CSV_HEADER = ("ch_x", "ch_y")


class LayoutError(ValueError):
    pass


class ChannelMismatchError(ValueError):
    pass


class HealthState(enum.IntEnum):
    NORMAL = 0
    OUTER = 1
    INNER = 2
    BALL = 3

    @property
    def title(self) -> str:
        return self.name.title()

    @classmethod
    def parse(cls, value) -> "HealthState":
        """Accept an int code, a member, or a case-insensitive class name."""
        if isinstance(value, cls):
            return value
        if isinstance(value, (int, np.integer)):
            return cls(int(value))
        try:
            return cls[str(value).strip().upper()]
        except KeyError:
            raise ValueError(f"unknown health state {value!r}") from None


@dataclass
class MultiSensorRecord:
    channels: np.ndarray  # (2, N)
    sample_rate_hz: float
    label: HealthState
    source_id: str = ""

    def __post_init__(self):
        self.channels = np.asarray(self.channels, dtype=np.float64)
        if self.channels.ndim != 2 or self.channels.shape[0] != 2:
            raise ChannelMismatchError(
                f"expected 2 channels of equal length, got shape {self.channels.shape}")
        if self.channels.shape[1] < 1:
            raise ValueError("record must contain at least one sample")
        if not self.sample_rate_hz > 0:
            raise ValueError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        self.label = HealthState.parse(self.label)

    @property
    def n_samples(self) -> int:
        return self.channels.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate_hz

    def with_channels(self, channels, sample_rate_hz=None) -> "MultiSensorRecord":
        return MultiSensorRecord(
            channels, self.sample_rate_hz if sample_rate_hz is None else sample_rate_hz,
            self.label, self.source_id)


@dataclass
class SpeedTrace:
    timestamps: np.ndarray
    rpm: np.ndarray
    rpm_band: tuple[float, float] = (0.0, 10_000.0)

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=np.float64)
        self.rpm = np.asarray(self.rpm, dtype=np.float64)
        if self.timestamps.shape != self.rpm.shape or self.timestamps.ndim != 1:
            raise ValueError("timestamps and rpm must be 1-D sequences of equal length")
        if np.any(np.diff(self.timestamps) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        lo, hi = self.rpm_band
        if np.any(self.rpm <= 0) or np.any(self.rpm < lo) or np.any(self.rpm > hi):
            raise ValueError(f"rpm outside plausible band {self.rpm_band}")

    def __len__(self):
        return len(self.timestamps)


def load_speed_trace(path) -> SpeedTrace:
    """Read a ``timestamp_s,rpm`` CSV (header optional)."""
    rows = _read_csv_rows(Path(path))
    if rows and not _is_number(rows[0][0]):
        rows = rows[1:]
    arr = np.array([[float(a), float(b)] for a, b in (r[:2] for r in rows)])
    return SpeedTrace(arr[:, 0], arr[:, 1])


def save_speed_trace(trace: SpeedTrace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp_s", "rpm"])
        for t, r in zip(trace.timestamps, trace.rpm):
            w.writerow([repr(float(t)), repr(float(r))])


# --------------------------------------------------------------------------- I/O

def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def _read_csv_rows(path: Path) -> list[list[str]]:
    with open(path, newline="") as fh:
        return [[c.strip() for c in row] for row in csv.reader(fh) if row]


def _manifest_path(path: Path) -> Path:
    return path.with_suffix(".json")


def _read_manifest(path: Path) -> dict:
    mpath = _manifest_path(path)
    if not mpath.exists():
        return {}
    with open(mpath) as fh:
        return json.load(fh)


def load_record(path, layout: str = "csv", *, sample_rate_hz=None, label=None,
                source_id=None) -> MultiSensorRecord:
    """Load a two-channel record from ``path``.

    Keyword arguments override values found in the JSON sidecar.
    """
    path = Path(path)
    if layout not in LAYOUTS:
        raise LayoutError(f"unknown layout {layout!r}; expected one of {LAYOUTS}")
    if not path.is_file():
        raise FileNotFoundError(f"cannot read record file {path}")
    meta = _read_manifest(path)
    if layout == "raw" and not meta:
        raise LayoutError(f"raw layout requires manifest {_manifest_path(path)}")

    if layout == "csv":
        channels = _parse_csv_channels(path)
    else:
        n_ch = int(meta.get("channels", 2))
        if n_ch != 2:
            raise ChannelMismatchError(f"manifest declares {n_ch} channels, expected 2")
        flat = np.fromfile(path, dtype="<f4")
        if flat.size % n_ch:
            raise ChannelMismatchError(
                f"{path}: {flat.size} float32 values do not split into {n_ch} channels")
        channels = flat.reshape(-1, n_ch).T.astype(np.float64)

    fs = sample_rate_hz if sample_rate_hz is not None else meta.get("sample_rate_hz")
    lab = label if label is not None else meta.get("label")
    if fs is None or lab is None:
        raise LayoutError(f"{path}: sample_rate_hz and label must come from a manifest or arguments")
    return MultiSensorRecord(channels, float(fs), HealthState.parse(lab),
                             source_id if source_id is not None else meta.get("source_id", path.stem))


def _parse_csv_channels(path: Path) -> np.ndarray:
    rows = _read_csv_rows(path)
    if rows and tuple(c.lower() for c in rows[0]) == CSV_HEADER:
        rows = rows[1:]
    xs, ys = [], []
    for i, row in enumerate(rows):
        cells = [c for c in row if c != ""]
        if len(cells) != 2:
            raise ChannelMismatchError(
                f"{path}: row {i} has {len(cells)} values; channel lengths differ")
        xs.append(float(cells[0]))
        ys.append(float(cells[1]))
    if not xs:
        raise ValueError(f"{path}: no samples")
    return np.array([xs, ys])


def save_record(record: MultiSensorRecord, path, layout: str = "raw") -> Path:
    """Write ``record`` and its JSON sidecar; returns the data path."""
    path = Path(path)
    if layout not in LAYOUTS:
        raise LayoutError(f"unknown layout {layout!r}")
    if layout == "raw":
        record.channels.T.astype("<f4").tofile(path)
    else:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            for x, y in record.channels.T:
                w.writerow([repr(float(x)), repr(float(y))])
    meta = {"sample_rate_hz": record.sample_rate_hz, "label": record.label.title,
            "channels": 2, "source_id": record.source_id, "layout": layout}
    with open(_manifest_path(path), "w") as fh:
        json.dump(meta, fh, indent=2)
    return path


# --------------------------------------------------------------------- synthesis

@dataclass
class SynthConfig:
    """Parameters of the surrogate bearing rig.

    Fault rates are impulse rates expressed as multiples of the shaft
    frequency; the per-fault gains scale ``impulse_amplitude`` so defect
    severity can differ between classes. ``speed_profile`` is a sequence of ``(time_s, rpm)`` knots that
    is linearly interpolated and held constant past its ends.
    """
    outer_rate: float = 3.05
    inner_rate: float = 4.95
    ball_rate: float = 1.99
    resonance_hz: float = 3000.0
    resonance_hz_y: float = 4100.0
    decay_per_s: float = 700.0
    impulse_amplitude: float = 1.0
    outer_gain: float = 1.0
    inner_gain: float = 1.0
    ball_gain: float = 1.0
    amplitude_jitter: float = 0.2
    timing_jitter: float = 0.01
    modulation_depth: float = 0.5
    cage_ratio: float = 0.4
    y_gain: float = 0.6
    base_noise: float = 0.1
    tone_amplitudes: tuple[float, ...] = (0.3, 0.15, 0.08)
    speed_profile: tuple[tuple[float, float], ...] = ((0.0, 680.0), (5.0, 2460.0), (10.0, 680.0))
    speed_ripple: tuple[tuple[float, float], ...] = ((8.0, 12.0), (9.15, 8.0))
    speed_trace_interval_s: float = 0.05
    duration_s: float = 10.0
    sample_rate_hz: float = 20_000.0
    seed: int = 0

    def __post_init__(self):
        self.speed_profile = tuple(tuple(map(float, k)) for k in self.speed_profile)
        self.speed_ripple = tuple(tuple(map(float, k)) for k in self.speed_ripple)
        self.tone_amplitudes = tuple(float(a) for a in self.tone_amplitudes)

    def validate(self) -> None:
        if not self.duration_s > 0:
            raise ValueError("duration_s must be positive")
        if not self.sample_rate_hz > 0:
            raise ValueError("sample_rate_hz must be positive")
        for name in ("outer_rate", "inner_rate", "ball_rate", "decay_per_s"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 <= self.amplitude_jitter < 1:
            raise ValueError("amplitude_jitter must lie in [0, 1)")
        nyq = self.sample_rate_hz / 2
        if not (0 < self.resonance_hz < nyq and 0 < self.resonance_hz_y < nyq):
            raise ValueError("resonance frequencies must lie below Nyquist")
        if not self.speed_profile:
            raise ValueError("speed_profile needs at least one knot")
        times = [t for t, _ in self.speed_profile]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("speed_profile times must be strictly increasing")
        if any(r <= 0 for _, r in self.speed_profile):
            raise ValueError("speed_profile rpm must be positive")

    def gain_for(self, label: HealthState) -> float:
        return {HealthState.OUTER: self.outer_gain, HealthState.INNER: self.inner_gain,
                HealthState.BALL: self.ball_gain}.get(label, 0.0)

    def rate_for(self, label: HealthState) -> float | None:
        return {HealthState.OUTER: self.outer_rate, HealthState.INNER: self.inner_rate,
                HealthState.BALL: self.ball_rate}.get(label)

    def rpm_at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        knots = np.array(self.speed_profile)
        rpm = np.interp(t, knots[:, 0], knots[:, 1])
        for freq, amp in self.speed_ripple:
            rpm = rpm + amp * np.sin(2 * np.pi * freq * t)
        return rpm


def _decaying_sinusoid(freq_hz: float, decay: float, fs: float) -> np.ndarray:
    n = int(np.ceil(np.log(1e3) / decay * fs)) + 1
    t = np.arange(n) / fs
    return np.exp(-decay * t) * np.sin(2 * np.pi * freq_hz * t)


def _impulse_train(shaft_phase: np.ndarray, rate: float, fs: float, shaft_hz: np.ndarray,
                   cfg: SynthConfig, rng: np.random.Generator, modulation_phase=None) -> np.ndarray:
    """Sparse impulse train firing whenever ``rate * shaft_phase`` crosses an integer."""
    fault_phase = rate * shaft_phase
    idx = np.flatnonzero(np.diff(np.floor(fault_phase)) > 0) + 1
    n = len(shaft_phase)
    train = np.zeros(n)
    if idx.size == 0:
        return train
    period = fs / (rate * shaft_hz[idx])
    idx = np.rint(idx + rng.normal(0.0, cfg.timing_jitter, idx.size) * period).astype(int)
    amps = cfg.impulse_amplitude * rng.uniform(1 - cfg.amplitude_jitter, 1 + cfg.amplitude_jitter,
                                               idx.size)
    if modulation_phase is not None:
        amps *= 1 + cfg.modulation_depth * np.cos(2 * np.pi * modulation_phase[np.clip(idx, 0, n - 1)])
    keep = (idx >= 0) & (idx < n)
    np.add.at(train, idx[keep], amps[keep])
    return train


def synth_record(cfg: SynthConfig, label) -> tuple[MultiSensorRecord, SpeedTrace]:
    """Generate one labelled two-channel record and its (nonuniformly sampled) speed trace.

    Every class shares a baseline of band-limited noise plus shaft-harmonic
    tones. Fault classes add an impulse train at ``rate * shaft frequency``
    whose impulses ring the housing resonance. Inner-race impulses are
    modulated once per shaft revolution, ball impulses at the cage rate.
    All randomness derives from ``cfg.seed`` and ``label``.
    """
    cfg.validate()
    label = HealthState.parse(label)
    rng = np.random.default_rng([int(cfg.seed), int(label)])
    fs = cfg.sample_rate_hz
    n = int(round(cfg.duration_s * fs))
    if n < 1:
        raise ValueError("duration too short for one sample")
    t = np.arange(n) / fs
    shaft_hz = cfg.rpm_at(t) / 60.0
    if np.any(shaft_hz <= 0):
        raise ValueError("speed profile produced non-positive rpm")
    shaft_phase = np.cumsum(shaft_hz) / fs

    sos = sp_signal.butter(4, 0.4 * fs, fs=fs, output="sos")
    # tone phases are shared by every class so they carry no label information
    phases = np.random.default_rng([int(cfg.seed)]).uniform(0, 2 * np.pi, (2, len(cfg.tone_amplitudes)))
    channels = np.empty((2, n))
    for q in range(2):
        noise = sp_signal.sosfilt(sos, rng.standard_normal(n))
        noise *= cfg.base_noise / max(noise.std(), 1e-12)
        tones = np.zeros(n)
        for h, amp in enumerate(cfg.tone_amplitudes, start=1):
            tones += amp * np.sin(2 * np.pi * h * shaft_phase + phases[q, h - 1])
        channels[q] = noise + tones * (1.0 if q == 0 else 0.8)

    rate = cfg.rate_for(label)
    if rate is not None:
        modulation = {HealthState.INNER: shaft_phase,
                      HealthState.BALL: cfg.cage_ratio * shaft_phase}.get(label)
        train = cfg.gain_for(label) * _impulse_train(shaft_phase, rate, fs, shaft_hz, cfg, rng,
                                                      modulation)
        for q, (f_res, gain) in enumerate(((cfg.resonance_hz, 1.0),
                                           (cfg.resonance_hz_y, cfg.y_gain))):
            kernel = _decaying_sinusoid(f_res, cfg.decay_per_s, fs)
            channels[q] += gain * sp_signal.oaconvolve(train, kernel)[:n]

    # speed acquisition: jittered intervals, never shorter than 80% of nominal
    step = cfg.speed_trace_interval_s
    gaps = step * rng.uniform(0.8, 1.2, int(cfg.duration_s / (0.8 * step)) + 2)
    ts = np.concatenate([[0.0], np.cumsum(gaps)])
    ts = ts[ts < cfg.duration_s]
    trace = SpeedTrace(ts, cfg.rpm_at(ts))
    record = MultiSensorRecord(channels, fs, label, f"synth-{label.title}-{cfg.seed}")
    return record, trace


# ------------------------------------------------------------ heuristic oracle

def detect_impulses(x, fs: float, resonance_hz: float, height: float,
                    min_spacing_s: float = 0.004, rel_bandwidth: float = 0.3) -> np.ndarray:
    """Sample indices of resonance-ringing impulses in ``x``.

    Band-passes around the resonance, takes the Hilbert envelope and keeps
    envelope peaks above ``height`` separated by at least ``min_spacing_s``.
    """
    x = np.asarray(x, dtype=np.float64)
    lo = resonance_hz * (1 - rel_bandwidth)
    hi = min(resonance_hz * (1 + rel_bandwidth), 0.49 * fs)
    sos = sp_signal.butter(4, [lo, hi], btype="bandpass", fs=fs, output="sos")
    env = np.abs(sp_signal.hilbert(sp_signal.sosfiltfilt(sos, x)))
    peaks, _ = sp_signal.find_peaks(env, height=height, distance=max(1, int(min_spacing_s * fs)))
    return peaks


def heuristic_classify(x, fs: float, mean_shaft_hz: float, cfg: SynthConfig,
                       height: float | None = None) -> HealthState:
    """Classify a window from resonance impulses alone: no impulses means Normal,
    otherwise the fault whose rate multiple is nearest the observed impulse rate."""
    if height is None:
        height = 0.35 * cfg.impulse_amplitude
    peaks = detect_impulses(x, fs, cfg.resonance_hz, height)
    if len(peaks) < 2:
        return HealthState.NORMAL
    observed = (len(peaks) - 1) / ((peaks[-1] - peaks[0]) / fs) / mean_shaft_hz
    faults = [HealthState.OUTER, HealthState.INNER, HealthState.BALL]
    return min(faults, key=lambda s: abs(np.log(observed / cfg.rate_for(s))))
