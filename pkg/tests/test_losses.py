import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from atomreload import losses
from atomreload.params import LossParams, SimConfig, ThermalParams
from atomreload.thermal import ThermalState, apply_heating

LP = LossParams()
COLD = ThermalState.rsc_floor(ThermalParams())
ALIGNED = losses.AlignmentState(0.0, 0.0, LP.lattice_period_um)


def test_vacuum():
    assert losses.vacuum_survival(300, 30) == pytest.approx(0.990, abs=5e-4)
    assert losses.vacuum_survival(150, 30) == pytest.approx(0.995, abs=5e-4)
    assert losses.vacuum_survival(0, 30) == 1.0
    assert losses.vacuum_survival(1e6, math.inf) == 1.0
    with pytest.raises(ValueError):
        losses.vacuum_survival(-1, 30)


@given(t1=st.floats(0, 1e4), t2=st.floats(0, 1e4), life=st.floats(0.1, 100))
def test_vacuum_semigroup(t1, t2, life):
    a = losses.vacuum_survival(t1, life) * losses.vacuum_survival(t2, life)
    assert losses.vacuum_survival(t1 + t2, life) == pytest.approx(a, rel=1e-9, abs=1e-300)
    assert losses.vacuum_survival(t1 + t2, life) <= losses.vacuum_survival(t1, life)


@given(eta=st.floats(0.01, 60))
def test_retention_matches_integral(eta):
    # density of states of a 3D harmonic trap goes as E**2
    ref, _ = integrate.quad(lambda e: 0.5 * e * e * math.exp(-e), 0, eta)
    assert losses.thermal_retention(eta, 1.0) == pytest.approx(ref, abs=1e-10)


def test_plateaus():
    loss459 = 1 - losses.handoff_survival(1.0, 459, COLD, ALIGNED, LP)
    loss423 = 1 - losses.handoff_survival(1.0, 423, COLD, ALIGNED, LP)
    assert loss459 == pytest.approx(0.0006, abs=0.0002)
    assert loss423 == pytest.approx(0.0015, abs=0.0004)


def test_deep_trap_is_exact_plateau():
    assert 1 - losses.handoff_survival(5.0, 459, COLD, ALIGNED, LP) == pytest.approx(0.0006, rel=1e-12)
    assert 1 - losses.handoff_survival(5.0, 423, COLD, ALIGNED, LP) == pytest.approx(0.0015, rel=1e-12)


def test_half_period_offset():
    for state in (COLD, apply_heating(COLD, 100, 190)):
        al = losses.AlignmentState(LP.lattice_period_um / 2, 0.0, LP.lattice_period_um)
        assert 1 - losses.handoff_survival(1.0, 459, state, al, LP) == pytest.approx(0.02, abs=0.001)


def test_no_trap():
    hot = ThermalState.at_temperature(50.0)
    assert losses.handoff_survival(0.0, 459, hot, ALIGNED, LP) == 0.0


def test_onset_below_threshold():
    loss = lambda d: 1 - losses.handoff_survival(d, 459, COLD, ALIGNED, LP)  # noqa: E731
    for d in (0.75, 0.8, 1.0, 2.0):
        assert loss(d) - 0.0006 <= LP.handoff_onset_loss + 1e-12
    assert loss(0.6) > 2 * 0.0006
    assert loss(0.5) > 5 * 0.0006


def test_barrier_default_is_calibrated():
    assert LP.handoff_barrier_fraction == pytest.approx(
        losses.calibrate_handoff_barrier(ThermalParams(), LP), rel=1e-3)


@given(d1=st.floats(0, 3), d2=st.floats(0, 3), off=st.floats(-1, 1), n=st.floats(0, 5))
def test_handoff_properties(d1, d2, off, n):
    al = losses.AlignmentState(off, 0.0, LP.lattice_period_um)
    st_ = ThermalState(n, n, n)
    lo, hi = sorted((d1, d2))
    for w in (459, 423):
        a = losses.handoff_survival(lo, w, st_, al, LP)
        b = losses.handoff_survival(hi, w, st_, al, LP)
        assert 0.0 <= a <= b <= 1.0


@given(off=st.floats(-3, 3))
def test_misalignment_periodic(off):
    p = LP.lattice_period_um
    m = losses.misalignment_fraction(losses.AlignmentState(off, 0, p))
    assert m == pytest.approx(losses.misalignment_fraction(losses.AlignmentState(off + p, 0, p)), abs=1e-9)
    assert 0.0 <= m <= 1.0


def test_tweezer_response():
    assert losses.rearrangement_tweezer_response(0.0, LP) == (0.0, 0.0)
    pick, dist = losses.rearrangement_tweezer_response(1.0, LP)
    assert pick >= 0.99 and dist <= 1e-4
    picks = [losses.rearrangement_tweezer_response(d, LP)[0] for d in np.linspace(0, 3, 31)]
    assert np.all(np.diff(picks) >= 0)
    dists = [losses.rearrangement_tweezer_response(d, LP)[1] for d in np.linspace(0, 3, 31)]
    assert np.all(np.diff(dists) >= 0) and dists[10] == 0 and dists[-1] > 0


def test_alignment_scan_recovers_optimum():
    c = SimConfig()
    p = c.losses.lattice_period_um
    for seed, true in enumerate((0.0, 0.13, -0.21)):
        offsets = np.linspace(true - p, true + p, 41)
        res = losses.alignment_scan(offsets, 25, np.random.default_rng(seed), c, true_optimum_um=true)
        assert abs(res.optimum_um - true) <= p / 50
        assert res.period_um == p


def test_alignment_scan_flat_fails():
    c = SimConfig()
    flat = c.replace(losses=LossParams(misaligned_handoff_loss_max=0.0006))
    p = c.losses.lattice_period_um
    with pytest.raises(losses.ScanFitError):
        losses.alignment_scan(np.linspace(-p, p, 41), 25, np.random.default_rng(0), flat)
    with pytest.raises(ValueError):
        losses.alignment_scan(np.linspace(0, p / 4, 9), 25, np.random.default_rng(0), c)


def test_scan_extremes_ratio():
    c = SimConfig()
    p = c.losses.lattice_period_um
    res = losses.alignment_scan(np.array([0.0, p / 4, p / 2, 3 * p / 4, p]), 25,
                                np.random.default_rng(1), c, n_atoms=200_000)
    best, worst = res.survival[0], res.survival[2]
    expect = (1 - 0.02) ** 25 / (1 - 0.0006) ** 25
    assert worst / best == pytest.approx(expect, rel=0.01)


def test_budget_defaults():
    rows = {r.mechanism: r for r in losses.budget_report(SimConfig())}
    assert rows["vacuum"].probability == pytest.approx(0.01, abs=0.002)
    assert rows["vacuum"].dominant
    assert sum(r.dominant for r in rows.values()) == 1
    assert rows["imaging_vacuum"].probability == pytest.approx(0.3 * 2e-3)
    assert rows["imaging_raman"].probability == pytest.approx(0.7 * 2e-3)
    assert "spin_flip" not in rows


def test_budget_no_vacuum():
    rows = {r.mechanism: r for r in losses.budget_report(SimConfig(vacuum_lifetime_s=math.inf))}
    assert rows["vacuum"].probability == 0.0


def test_budget_text():
    text = losses.budget_rows_text(losses.budget_report(SimConfig()))
    assert "dominant" in text and text.splitlines()[-1].startswith("total")
