import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import linear_sum_assignment

from atomreload import _pykernels, kernels

try:
    from atomreload import _ckernels
except ImportError:  # extension not built
    _ckernels = None

BACKENDS = [_pykernels] + ([_ckernels] if _ckernels else [])


def test_backend_reported():
    assert kernels.BACKEND in ("cython", "python")


@pytest.mark.parametrize("mod", BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
@given(n=st.integers(0, 12), m=st.integers(0, 12), seed=st.integers(0, 2**31), ints=st.booleans())
def test_assignment_optimal(mod, n, m, seed, ints):
    rng = np.random.default_rng(seed)
    cost = rng.integers(0, 4, (n, m)).astype(float) if ints else rng.random((n, m)) * 50
    r, c = mod.solve_assignment(cost)
    assert len(r) == min(n, m)
    assert len(set(r)) == len(r) and len(set(c)) == len(c)
    rr, cc = linear_sum_assignment(cost)
    assert cost[r, c].sum() == pytest.approx(cost[rr, cc].sum(), abs=1e-9)
    assert list(r) == sorted(r)


@pytest.mark.skipif(_ckernels is None, reason="compiled extension not built")
@given(n=st.integers(1, 15), m=st.integers(1, 15), seed=st.integers(0, 2**31), ints=st.booleans())
def test_backends_identical(n, m, seed, ints):
    rng = np.random.default_rng(seed)
    cost = rng.integers(0, 3, (n, m)).astype(float) if ints else rng.random((n, m))
    a = _pykernels.solve_assignment(cost)
    b = _ckernels.solve_assignment(cost)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_non_finite_rejected():
    for mod in BACKENDS:
        with pytest.raises(ValueError):
            mod.solve_assignment(np.array([[1.0, np.inf]]))


def _brute_close(path, xs, ys, cand, radius):
    out = np.zeros(len(xs), bool)
    for s in range(len(xs)):
        if not cand[s]:
            continue
        for a, b in zip(path[:-1], path[1:]):
            # dense sampling of the segment as an independent distance estimate
            t = np.linspace(0, 1, 20001)[:, None]
            pts = a + t * (b - a)
            if np.min(np.hypot(pts[:, 0] - xs[s], pts[:, 1] - ys[s])) <= radius + 1e-3:
                out[s] = True
    return out


@pytest.mark.parametrize("mod", BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
def test_close_sites_brute_force(mod):
    rng = np.random.default_rng(0)
    r, c = np.divmod(np.arange(36), 6)
    xs, ys = c * 3.3, r * 3.3
    for _ in range(20):
        cand = (rng.random(36) < 0.7).astype(np.uint8)
        path = np.column_stack([rng.uniform(-5, 20, 4), rng.uniform(-5, 20, 4)])
        got = mod.close_sites(path, xs, ys, cand, 1.6)
        ref = _brute_close(path, xs, ys, cand, 1.6)
        # the sampled reference can only over-report by its 1e-3 slack
        d_ok = got <= ref
        assert d_ok.all()
        strict = _brute_close(path, xs, ys, cand, 1.6 - 2e-3)
        assert (strict <= got).all()


@pytest.mark.skipif(_ckernels is None, reason="compiled extension not built")
def test_close_sites_backends_identical():
    rng = np.random.default_rng(1)
    xs, ys = rng.uniform(0, 100, 500), rng.uniform(0, 100, 500)
    for _ in range(50):
        cand = (rng.random(500) < 0.9).astype(np.uint8)
        path = rng.uniform(-10, 110, (4, 2))
        assert np.array_equal(_pykernels.close_sites(path, xs, ys, cand, 1.6),
                              _ckernels.close_sites(path, xs, ys, cand, 1.6))


@pytest.mark.skipif(_ckernels is None, reason="compiled extension not built")
def test_simulation_identical_across_backends(monkeypatch):
    from atomreload import protocol
    from atomreload.params import SimConfig

    cfg = SimConfig()
    fast = protocol.run_simulation(cfg, 40, "loading", seed=21, diagnostic_every=7).to_jsonl()
    monkeypatch.setattr(kernels, "solve_assignment", _pykernels.solve_assignment)
    monkeypatch.setattr(kernels, "close_sites", _pykernels.close_sites)
    slow = protocol.run_simulation(cfg, 40, "loading", seed=21, diagnostic_every=7).to_jsonl()
    assert fast == slow
