"""PSNR / SSIM / MSE and the per-channel report tables."""
from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .fields import ParameterMaps, ScalarField, check_same_shape

PSNR_INF = math.inf


class Channel(enum.Enum):
    INTENSITY = "intensity"
    N = "n"
    MUS = "mu_s"
    G = "g"


@dataclass(frozen=True)
class MetricReport:
    psnr: float
    ssim: float
    mse: float
    channel: Channel


def _arrays(a, b):
    if isinstance(a, ScalarField):
        check_same_shape(a, b)
        return a.data, b.data
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def mse(a, b) -> float:
    a, b = _arrays(a, b)
    d = a - b
    return float(np.mean(d * d))


def psnr(a, b, data_range: float) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for identical inputs."""
    if not data_range > 0:
        raise ValueError(f"data_range must be > 0, got {data_range}")
    m = mse(a, b)
    if m == 0.0:
        return PSNR_INF
    return 10.0 * math.log10(data_range * data_range / m)


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    w = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return w / w.sum()


def _filter_valid(a: np.ndarray, w: np.ndarray) -> np.ndarray:
    k = w.size
    a = sliding_window_view(a, k, axis=0) @ w
    return sliding_window_view(a, k, axis=1) @ w


def ssim(a, b, data_range: float, window: int = 11, sigma: float = 1.5, k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean structural similarity over all fully contained Gaussian windows."""
    a, b = _arrays(a, b)
    if a.shape[0] < window or a.shape[1] < window:
        raise ValueError(f"image {a.shape} smaller than the {window}x{window} window")
    if not data_range > 0:
        raise ValueError(f"data_range must be > 0, got {data_range}")
    w = gaussian_window(window, sigma)
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    mu_a = _filter_valid(a, w)
    mu_b = _filter_valid(b, w)
    var_a = _filter_valid(a * a, w) - mu_a * mu_a
    var_b = _filter_valid(b * b, w) - mu_b * mu_b
    cov = _filter_valid(a * b, w) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def report(a, b, data_range: float, channel: Channel) -> MetricReport:
    return MetricReport(psnr(a, b, data_range), ssim(a, b, data_range), mse(a, b), channel)


# -- per-channel evaluation ---------------------------------------------------

_FALLBACK_RANGE = {Channel.N: 1.0, Channel.MUS: 1.0, Channel.G: 0.999}
MUS_DISPLAY_SCALE = 1e-3  # 1/m -> 1/mm


def evaluate_intensity(pred: ScalarField, reference: ScalarField) -> MetricReport:
    """Both images scaled by the reference min-max into [0, 1]; data range 1."""
    check_same_shape(pred, reference)
    lo, hi = reference.data.min(), reference.data.max()
    span = hi - lo if hi > lo else 1.0
    return report((pred.data - lo) / span, (reference.data - lo) / span, 1.0, Channel.INTENSITY)


def evaluate_maps(pred: ParameterMaps, truth: ParameterMaps) -> dict[Channel, MetricReport]:
    """Per-channel metrics in physical units (mu_s in 1/mm).

    The data range of each channel is the truth's max - min, falling back to
    the channel's clamp range when the truth is constant.
    """
    out = {}
    for ch, p, t in (
        (Channel.N, pred.n.data, truth.n.data),
        (Channel.MUS, pred.mu_s.data * MUS_DISPLAY_SCALE, truth.mu_s.data * MUS_DISPLAY_SCALE),
        (Channel.G, pred.g.data, truth.g.data),
    ):
        rng = float(t.max() - t.min())
        if not rng > 0:
            rng = _FALLBACK_RANGE[ch]
        out[ch] = report(p, t, rng, ch)
    return out


# -- tables -------------------------------------------------------------------

TABLE_ORDER = (Channel.INTENSITY, Channel.MUS, Channel.N, Channel.G)


def metrics_csv(rows: dict[str, dict[Channel, MetricReport]]) -> str:
    """One row per model; columns ``<channel>_psnr, <channel>_ssim, <channel>_mse``."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    chans = [c for c in TABLE_ORDER if any(c in r for r in rows.values())]
    writer.writerow(["model"] + [f"{c.value}_{m}" for c in chans for m in ("psnr", "ssim", "mse")])
    for name, rep in rows.items():
        line = [name]
        for c in chans:
            r = rep.get(c)
            line += ["", "", ""] if r is None else [repr(r.psnr), repr(r.ssim), repr(r.mse)]
        writer.writerow(line)
    return buf.getvalue()


def _fmt_mse(v: float) -> str:
    return f"{v:.3g}" if 1e-2 <= v < 1e3 else f"{v:.2e}"


def metrics_text(rows: dict[str, dict[Channel, MetricReport]]) -> str:
    """Two aligned tables: (intensity, mu_s) and (n, g)."""
    out = []
    name_w = max([len("Model")] + [len(n) for n in rows])
    for pair in ((Channel.INTENSITY, Channel.MUS), (Channel.N, Channel.G)):
        if not any(c in r for r in rows.values() for c in pair):
            continue
        head1 = " " * name_w + "".join(f" | {c.value:^26}" for c in pair)
        head2 = f"{'Model':<{name_w}}" + " | PSNR    SSIM    MSE      " * len(pair)
        out += [head1, head2.rstrip(), "-" * len(head2.rstrip())]
        for name, rep in rows.items():
            line = f"{name:<{name_w}}"
            for c in pair:
                r = rep.get(c)
                if r is None:
                    line += " | " + "-".center(24)
                else:
                    p = "inf" if math.isinf(r.psnr) else f"{r.psnr:.2f}"
                    line += f" | {p:<7} {r.ssim:<7.3f} {_fmt_mse(r.mse):<9}"
            out.append(line.rstrip())
        out.append("")
    return "\n".join(out)


# -- per-region summary ---------------------------------------------------------

REGION_HEADER = "region,pixels,n_true,n_mean,mu_s_true,mu_s_mean,mu_s_rel_err,g_true,g_mean"


def region_errors(pred: ParameterMaps, truth: ParameterMaps, min_pixels: int = 1) -> list[dict]:
    """Mean estimate inside every region of constant ground truth.

    Regions are the distinct (n, mu_s, g) triples of ``truth``, ordered by
    first appearance in row-major order. ``mu_s_rel_err`` is NaN where the
    true mu_s is zero.
    """
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    keys = truth.stack().reshape(3, -1).T
    uniq, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.reshape(-1)
    est = pred.stack().reshape(3, -1)
    rows = []
    for rank, u in enumerate(np.argsort(first)):
        mask = inverse == u
        count = int(mask.sum())
        if count < min_pixels:
            continue
        n_t, m_t, g_t = uniq[u]
        n_e, m_e, g_e = (float(est[c][mask].mean()) for c in range(3))
        rel = float((m_e - m_t) / m_t) if m_t > 0 else math.nan
        rows.append({
            "region": rank, "pixels": count,
            "n_true": float(n_t), "n_mean": n_e,
            "mu_s_true": float(m_t), "mu_s_mean": m_e, "mu_s_rel_err": rel,
            "g_true": float(g_t), "g_mean": g_e,
        })
    return rows


def region_csv(rows: list[dict]) -> str:
    keys = REGION_HEADER.split(",")
    lines = [REGION_HEADER]
    lines += [",".join(repr(r[k]) for k in keys) for r in rows]
    return "\n".join(lines) + "\n"
