"""Fluorescence readout: photon counts, thresholding, fidelity estimators, imaging loss."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy import optimize, stats

BRIGHT = 0.5
DARK = -0.5


class FitError(RuntimeError):
    """Histogram could not be described by two separated Gaussians."""


@dataclass(frozen=True)
class FidelityEstimate:
    fidelity: float
    ci_low: float
    ci_high: float
    method: str
    sample_size: int
    events: int | None = None

    def __post_init__(self):
        if not self.ci_low <= self.fidelity <= self.ci_high:
            raise ValueError("confidence interval must bracket the estimate")


def _check_model(model):
    if model.signal_mean <= model.background_mean:
        raise ValueError("signal mean must exceed background mean")
    if model.signal_width < 0 or model.background_width < 0:
        raise ValueError("widths must be >= 0")


def sample_counts(occupied, model, rng: np.random.Generator):
    """Draw camera counts for each site (scalar or array of booleans)."""
    _check_model(model)
    occ = np.asarray(occupied, dtype=bool)
    noise = rng.standard_normal(occ.shape)
    counts = np.where(occ, model.signal_mean + model.signal_width * noise,
                      model.background_mean + model.background_width * noise)
    return counts if occ.ndim else float(counts)


def classify(counts, threshold):
    """Occupied iff counts strictly exceed the threshold."""
    out = np.asarray(counts) > threshold
    return out if out.ndim else bool(out)


def balanced_threshold(mu_b, sigma_b, mu_s, sigma_s) -> float:
    """Threshold with equal false-positive and false-negative Gaussian tails."""
    return (mu_b * sigma_s + mu_s * sigma_b) / (sigma_b + sigma_s)


def error_rates(model, threshold=None) -> tuple[float, float]:
    """(false_positive, false_negative) probabilities of the Gaussian count model."""
    t = model.threshold if threshold is None else threshold
    if model.background_width == 0:
        fp = float(model.background_mean > t)
    else:
        fp = stats.norm.sf((t - model.background_mean) / model.background_width)
    if model.signal_width == 0:
        fn = float(model.signal_mean <= t)
    else:
        fn = stats.norm.cdf((t - model.signal_mean) / model.signal_width)
    return float(fp), float(fn)


# --------------------------------------------------------------- Gaussian fit

class GaussianPair(NamedTuple):
    weight_b: float
    mean_b: float
    width_b: float
    weight_s: float
    mean_s: float
    width_s: float


def _two_gauss(x, wb, mb, sb, ws, ms, ss):
    return (wb * np.exp(-0.5 * ((x - mb) / sb) ** 2) / (sb * math.sqrt(2 * math.pi))
            + ws * np.exp(-0.5 * ((x - ms) / ss) ** 2) / (ss * math.sqrt(2 * math.pi)))


def _overlap_infidelity(p, threshold=None):
    wb, mb, sb, ws, ms, ss = p
    t = balanced_threshold(mb, sb, ms, ss) if threshold is None else threshold
    bad = wb * stats.norm.sf((t - mb) / sb) + ws * stats.norm.cdf((t - ms) / ss)
    return bad / (wb + ws), t


def fit_histogram(samples: Sequence[float], bin_width: float = 1.0, confidence: float = 0.68):
    """Fit a two-Gaussian mixture to a count histogram.

    Returns ``(GaussianPair, threshold, FidelityEstimate)``. The threshold
    balances the two error tails; the infidelity is the normalised area of
    each Gaussian on the wrong side of it.
    """
    x = np.asarray(samples, dtype=float)
    if x.size < 100:
        raise FitError("need at least 100 samples")
    # initial split: 1-D two-means
    lo, hi = np.percentile(x, [5, 95])
    if hi - lo <= 0:
        raise FitError("data are degenerate")
    split = 0.5 * (lo + hi)
    for _ in range(50):
        a, b = x[x <= split], x[x > split]
        if a.size == 0 or b.size == 0:
            raise FitError("data are unimodal")
        new = 0.5 * (a.mean() + b.mean())
        if abs(new - split) < 1e-9:
            break
        split = new
    edges = np.arange(math.floor(x.min()) - bin_width, x.max() + 2 * bin_width, bin_width)
    hist, edges = np.histogram(x, bins=edges)
    centres = 0.5 * (edges[1:] + edges[:-1])
    density = hist / (x.size * bin_width)
    sigma = np.sqrt(np.maximum(hist, 1)) / (x.size * bin_width)
    p0 = [a.size / x.size, a.mean(), max(a.std(), bin_width / 2),
          b.size / x.size, b.mean(), max(b.std(), bin_width / 2)]
    bounds = ([0, -np.inf, bin_width / 10, 0, -np.inf, bin_width / 10],
              [2, np.inf, np.inf, 2, np.inf, np.inf])
    try:
        p, cov = optimize.curve_fit(_two_gauss, centres, density, p0=p0, sigma=sigma,
                                    bounds=bounds, maxfev=20000)
    except (RuntimeError, ValueError) as exc:
        raise FitError(f"two-Gaussian fit failed: {exc}") from None
    if p[1] > p[4]:
        p = np.r_[p[3:], p[:3]]
        cov = cov[np.ix_([3, 4, 5, 0, 1, 2], [3, 4, 5, 0, 1, 2])]
    pair = GaussianPair(*map(float, p))
    # bimodal only if the fitted density dips between the two means
    grid = np.linspace(pair.mean_b, pair.mean_s, 201)
    dens = _two_gauss(grid, *p)
    if pair.mean_s <= pair.mean_b or dens.min() >= 0.9 * min(dens[0], dens[-1]):
        raise FitError("fitted components are not separated")
    infid, t = _overlap_infidelity(p)
    if infid < 1e-300:
        return pair, float(t), FidelityEstimate(1.0, 1.0, 1.0, "gaussian_fit", int(x.size))
    # delta-method uncertainty on the infidelity, on a log scale
    grad = np.zeros(6)
    for k in range(6):
        h = 1e-6 * max(abs(p[k]), 1.0)
        dp = p.copy()
        dp[k] += h
        grad[k] = (math.log(max(_overlap_infidelity(dp)[0], 1e-300)) - math.log(infid)) / h
    var = float(grad @ cov @ grad) if np.all(np.isfinite(cov)) else float("inf")
    z = stats.norm.isf((1 - confidence) / 2)
    spread = math.exp(z * math.sqrt(max(var, 0.0))) if math.isfinite(var) else float("inf")
    fid = 1.0 - infid
    est = FidelityEstimate(fid, max(0.0, 1.0 - infid * spread), min(1.0, 1.0 - infid / spread),
                           "gaussian_fit", int(x.size))
    return pair, float(t), est


# -------------------------------------------------------- repeated images

def clopper_pearson(k: int, n: int, confidence: float = 0.68) -> tuple[float, float]:
    """Exact binomial interval on a rate k/n."""
    if n <= 0 or not 0 <= k <= n:
        raise ValueError("need 0 <= k <= n and n > 0")
    alpha = 1 - confidence
    lo = 0.0 if k == 0 else float(stats.beta.ppf(alpha / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(stats.beta.ppf(1 - alpha / 2, k + 1, n - k))
    return lo, hi


def misidentification_events(sequence) -> np.ndarray:
    """Boolean mask over interior images that disagree with both neighbours."""
    c = np.asarray(sequence, dtype=bool)
    return (c[1:-1] != c[:-2]) & (c[1:-1] != c[2:])


def repeated_image_fidelity(image_sequences, confidence: float = 0.68) -> FidelityEstimate:
    """Fidelity from per-site classification sequences of repeated images."""
    k = n = 0
    for seq in image_sequences:
        seq = np.asarray(seq, dtype=bool)
        if seq.size < 3:
            raise ValueError("each sequence needs at least 3 images")
        k += int(misidentification_events(seq).sum())
        n += seq.size - 2
    if n == 0:
        raise ValueError("no sequences given")
    lo, hi = clopper_pearson(k, n, confidence)
    return FidelityEstimate(1 - k / n, 1 - hi, 1 - lo, "repeated_images", n, k)


# ------------------------------------------------------------ imaging loss

class ImageOutcome(NamedTuple):
    occupied_call: bool
    survived: bool
    spin: float
    loss_mechanism: str | None


def image_atom(occupied: bool, spin: float, model, rng: np.random.Generator) -> ImageOutcome:
    """Image one site: classify, then apply loss (and spin flips in spin-selective mode).

    Only the bright spin scatters in spin-selective mode; the classification
    reflects the state at the start of the exposure.
    """
    bright = occupied and (model.mode == "occupancy" or spin == BRIGHT)
    call = classify(sample_counts(bright, model, rng), model.threshold)
    if not occupied:
        return ImageOutcome(call, False, spin, None)
    if rng.random() < model.loss_per_image:
        mech = "imaging_vacuum" if rng.random() < model.vacuum_fraction_of_loss else "imaging_raman"
        return ImageOutcome(call, False, spin, mech)
    if model.mode == "spin_selective" and rng.random() < model.spin_flip_probability:
        spin = -spin
    return ImageOutcome(call, True, spin, None)


class ImageBatch(NamedTuple):
    calls: np.ndarray
    survived: np.ndarray
    vacuum_loss: np.ndarray
    raman_loss: np.ndarray


def image_sites(occupied: np.ndarray, model, rng: np.random.Generator) -> ImageBatch:
    """Vectorised occupancy-mode imaging of many sites."""
    occ = np.asarray(occupied, dtype=bool)
    calls = classify(sample_counts(occ, model, rng), model.threshold)
    u = rng.random(occ.shape)
    lost = occ & (u < model.loss_per_image)
    vac = lost & (u < model.loss_per_image * model.vacuum_fraction_of_loss)
    return ImageBatch(calls, occ & ~lost, vac, lost & ~vac)


def histogram_rows(samples, bin_width: float = 1.0):
    """(bin_low, bin_high, count) rows for CSV export."""
    x = np.asarray(samples, dtype=float)
    edges = np.arange(math.floor(x.min()), x.max() + bin_width, bin_width)
    hist, edges = np.histogram(x, bins=edges)
    return [(float(lo), float(hi), int(c)) for lo, hi, c in zip(edges[:-1], edges[1:], hist)]
