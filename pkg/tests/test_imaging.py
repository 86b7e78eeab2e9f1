import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from atomreload import imaging
from atomreload.params import ImagingParams

M = ImagingParams()


def cp_oracle(k, n, conf=0.68):
    """Exact binomial interval by bisection on the binomial tail sums."""
    a = (1 - conf) / 2

    def bisect(f):
        lo, hi = 0.0, 1.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if f(mid) else (lo, mid)
        return 0.5 * (lo + hi)

    low = 0.0 if k == 0 else bisect(lambda p: stats.binom.sf(k - 1, n, p) < a)
    high = 1.0 if k == n else bisect(lambda p: stats.binom.cdf(k, n, p) > a)
    return low, high


def test_empty_site_below_threshold():
    fp, _ = imaging.error_rates(M)
    assert 1 - fp >= 0.999
    rng = np.random.default_rng(0)
    counts = imaging.sample_counts(np.zeros(100_000, bool), M, rng)
    assert np.mean(counts <= M.threshold) >= 0.999
    assert counts.mean() == pytest.approx(5.0, abs=0.05)


def test_degenerate_signal():
    m = ImagingParams(signal_width=0.0, background_width=0.0)
    assert imaging.sample_counts(True, m, np.random.default_rng(1)) == 50.0


def test_bimodal_histogram():
    rng = np.random.default_rng(2)
    occ = rng.random(100_000) < 0.5
    counts = imaging.sample_counts(occ, M, rng)
    hist, edges = np.histogram(counts, bins=np.arange(-20, 100, 2.0))
    peaks = [edges[i] + 1 for i in range(1, len(hist) - 1)
             if hist[i] > hist[i - 1] and hist[i] >= hist[i + 1] and hist[i] > 1000]
    assert len(peaks) == 2
    assert peaks[0] == pytest.approx(5, abs=2) and peaks[1] == pytest.approx(50, abs=3)


def test_seeded_determinism():
    a = imaging.sample_counts(np.ones(10, bool), M, np.random.default_rng(5))
    b = imaging.sample_counts(np.ones(10, bool), M, np.random.default_rng(5))
    assert np.array_equal(a, b)


def test_classify():
    assert imaging.classify(M.signal_mean, M.threshold)
    assert not imaging.classify(0.0, M.threshold)
    assert not imaging.classify(M.threshold, M.threshold)


@given(st.lists(st.floats(-50, 150), min_size=1, max_size=30))
def test_threshold_monotone(counts):
    prev = None
    for t in np.linspace(-60, 160, 23):
        n = int(np.sum(imaging.classify(np.array(counts), t)))
        assert prev is None or n <= prev
        prev = n
    assert prev == 0


def test_balanced_threshold_default():
    fp, fn = imaging.error_rates(M)
    assert fp == pytest.approx(fn, rel=1e-3)
    assert 1 - (fp + fn) / 2 == pytest.approx(0.9995, abs=1e-6)
    assert imaging.balanced_threshold(5.0, M.background_width, 50.0, 10.0) == pytest.approx(M.threshold, abs=1e-3)


def test_fit_default_model():
    rng = np.random.default_rng(3)
    counts = imaging.sample_counts(rng.random(200_000) < 0.5, M, rng)
    pair, t, est = imaging.fit_histogram(counts)
    assert est.fidelity == pytest.approx(0.9995, abs=0.0003)
    assert est.ci_low <= est.fidelity <= est.ci_high
    assert est.method == "gaussian_fit"


def test_fit_recovers_means():
    rng = np.random.default_rng(4)
    x = np.r_[rng.normal(12.0, 2.5, 30_000), rng.normal(80.0, 7.0, 20_000)]
    pair, _, _ = imaging.fit_histogram(x)
    assert pair.mean_b == pytest.approx(12.0, rel=0.02)
    assert pair.mean_s == pytest.approx(80.0, rel=0.02)
    assert pair.weight_b / (pair.weight_b + pair.weight_s) == pytest.approx(0.6, abs=0.01)


def test_fit_separated_modes():
    rng = np.random.default_rng(5)
    x = np.r_[rng.normal(0, 1, 5000), rng.normal(1000, 1, 5000)]
    _, _, est = imaging.fit_histogram(x)
    assert est.fidelity == pytest.approx(1.0, abs=1e-12)


def test_fit_unimodal_fails():
    x = np.random.default_rng(6).normal(10, 3, 5000)
    with pytest.raises(imaging.FitError):
        imaging.fit_histogram(x)
    with pytest.raises(imaging.FitError):
        imaging.fit_histogram([1.0] * 10)


def test_isolated_flip():
    est = imaging.repeated_image_fidelity([[1, 1, 0, 1, 1]])
    assert est.events == 1 and est.sample_size == 3


def test_error_free():
    seqs = [np.ones(12, bool)] * 10
    est = imaging.repeated_image_fidelity(seqs)
    assert est.fidelity == 1.0 and est.ci_high == 1.0
    n = 100
    assert est.ci_low == pytest.approx(1 - (1 - (0.16) ** (1 / n)), rel=1e-9)


def test_too_short():
    with pytest.raises(ValueError):
        imaging.repeated_image_fidelity([[1, 0]])


@given(n=st.integers(1, 3000), frac=st.floats(0, 1))
def test_clopper_pearson_oracle(n, frac):
    k = int(round(frac * n))
    lo, hi = imaging.clopper_pearson(k, n)
    olo, ohi = cp_oracle(k, n)
    assert lo == pytest.approx(olo, abs=1e-7) and hi == pytest.approx(ohi, abs=1e-7)
    assert lo <= k / n <= hi


def _sequences(rng, n_sites, length, err):
    truth = rng.random(n_sites) < 0.5
    flips = rng.random((n_sites, length)) < err
    return truth[:, None] ^ flips


def test_repeated_estimator_converges():
    rng = np.random.default_rng(7)
    fp, fn = imaging.error_rates(M)
    err = 0.5 * (fp + fn)
    seqs = _sequences(rng, 1000, 102, err)
    est = imaging.repeated_image_fidelity(seqs)
    p = err * (1 - err)  # a single wrong call flanked by two right ones, or vice versa
    sigma = math.sqrt(p * (1 - p) / est.sample_size)
    assert abs((1 - est.fidelity) - p) <= 3 * sigma


def test_estimators_agree():
    rng = np.random.default_rng(8)
    occ = rng.random(1500) < 0.5
    images = np.array([imaging.classify(imaging.sample_counts(occ, M, rng), M.threshold)
                       for _ in range(70)]).T
    counts = imaging.sample_counts(np.repeat(occ, 70), M, rng)
    _, _, g = imaging.fit_histogram(counts)
    r = imaging.repeated_image_fidelity(images)
    assert g.ci_low <= r.ci_high and r.ci_low <= g.ci_high


def test_balanced_rates_on_data():
    rng = np.random.default_rng(9)
    n = 200_000
    fp = np.mean(imaging.sample_counts(np.zeros(n, bool), M, rng) > M.threshold)
    fn = np.mean(imaging.sample_counts(np.ones(n, bool), M, rng) <= M.threshold)
    sigma = math.sqrt((fp * (1 - fp) + fn * (1 - fn)) / n)
    assert abs(fp - fn) <= 2 * sigma


def test_image_atom_occupancy_loss():
    rng = np.random.default_rng(10)
    out = [imaging.image_atom(True, 0.5, M, rng) for _ in range(100_000)]
    surv = np.mean([o.survived for o in out])
    assert surv == pytest.approx(0.998, abs=0.001)
    mech = [o.loss_mechanism for o in out if not o.survived]
    assert np.mean([m == "imaging_vacuum" for m in mech]) == pytest.approx(0.3, abs=0.1)


def test_image_atom_spin_flips():
    m = ImagingParams(mode="spin_selective")
    rng = np.random.default_rng(11)
    out = [imaging.image_atom(True, imaging.BRIGHT, m, rng) for _ in range(100_000)]
    flipped = np.mean([o.survived and o.spin == imaging.DARK for o in out])
    assert flipped == pytest.approx(4e-3, abs=1e-3)
    # dark atoms do not scatter and read as empty
    dark = [imaging.image_atom(True, imaging.DARK, m, rng).occupied_call for _ in range(2000)]
    assert np.mean(dark) < 0.01


def test_image_atom_lossless():
    m = ImagingParams(loss_per_image=0.0, spin_flip_probability=0.0, mode="spin_selective")
    rng = np.random.default_rng(12)
    assert all(imaging.image_atom(True, 0.5, m, rng).survived for _ in range(5000))


def test_vectorised_imaging_matches_rates():
    rng = np.random.default_rng(13)
    b = imaging.image_sites(np.ones(500_000, bool), M, rng)
    assert 1 - b.survived.mean() == pytest.approx(2e-3, abs=2e-4)
    assert b.vacuum_loss.sum() / (b.vacuum_loss.sum() + b.raman_loss.sum()) == pytest.approx(0.3, abs=0.03)


def test_histogram_rows():
    rows = imaging.histogram_rows([0.5, 1.5, 1.7, 3.2])
    assert sum(r[2] for r in rows) == 4
    assert all(hi - lo == 1.0 for lo, hi, _ in rows)
