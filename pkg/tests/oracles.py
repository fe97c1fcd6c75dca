"""Independent reference computations used by several test modules."""
import numpy as np
from scipy import integrate, stats

from vibdiag.model import ModelConfig, backward, build, forward, loss


def tiny_config(**kw) -> ModelConfig:
    base = dict(input_length=32, conv_blocks=2, filters_per_block=4, kernel_sizes=(5, 3),
                dense_units=8)
    base.update(kw)
    return ModelConfig(**base)


def gradient_check(cfg: ModelConfig | None = None, batch: int = 3, step: float = 1e-5,
                   seed: int = 0) -> float:
    """Max element-wise relative error between analytic and central-difference gradients."""
    cfg = cfg or tiny_config()
    params, _ = build(cfg, seed=seed)
    rng = np.random.default_rng(seed + 1)
    x = rng.standard_normal((batch, cfg.input_length, cfg.input_channels))
    y = rng.integers(0, cfg.num_classes, batch)
    dseed = [seed, 99]

    def objective():
        return loss(forward(params, x, training=True, dropout_seed=dseed)[0], y)

    _, cache = forward(params, x, training=True, dropout_seed=dseed)
    analytic = backward(params, cache, y)
    worst = 0.0
    for name, tensor in params.tensors.items():
        flat = tensor.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = objective()
            flat[i] = orig - step
            down = objective()
            flat[i] = orig
            numeric = (up - down) / (2 * step)
            a = analytic[name].reshape(-1)[i]
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-6)
            worst = max(worst, err)
    return worst


def brute_force_metrics(counts) -> dict:
    """Macro one-vs-all metrics by relabelling every sample explicitly."""
    counts = np.asarray(counts)
    n = counts.shape[0]
    truth, pred = [], []
    for t in range(n):
        for p in range(n):
            truth += [t] * int(counts[t, p])
            pred += [p] * int(counts[t, p])
    truth, pred = np.array(truth), np.array(pred)
    acc = prec = rec = f1 = 0.0
    for c in range(n):
        tp = int(np.sum((truth == c) & (pred == c)))
        tn = int(np.sum((truth != c) & (pred != c)))
        fp = int(np.sum((truth != c) & (pred == c)))
        fn = int(np.sum((truth == c) & (pred != c)))
        acc += (tp + tn) / len(truth)
        prec += tp / (tp + fp) if tp + fp else 0.0
        rec += tp / (tp + fn) if tp + fn else 0.0
        f1 += 2 * tp / (2 * tp + fp + fn) if 2 * tp + fp + fn else 0.0
    return {"accuracy": acc / n, "precision": prec / n, "recall": rec / n, "f1": f1 / n}


def gaussian_overlap(gap: float) -> float:
    """Overlap coefficient of N(0,1) and N(gap,1) by numerical integration of min(pdf)."""
    def low(x):
        return min(stats.norm.pdf(x), stats.norm.pdf(x, loc=gap))
    left, _ = integrate.quad(low, -np.inf, gap / 2, limit=200)
    right, _ = integrate.quad(low, gap / 2, np.inf, limit=200)
    return left + right


def planted_band_segments(rng, n, band, gain_db, length=1024):
    """White-noise segments with ``gain_db`` extra power inside FFT bins ``band`` (inclusive)."""
    x = rng.standard_normal((n, length))
    if gain_db:
        spec = np.fft.rfft(x, axis=1)
        lo, hi = band
        spec[:, lo:hi + 1] *= 10 ** (gain_db / 20)
        x = np.fft.irfft(spec, n=length, axis=1)
    return x
