"""The numba and numpy kernel paths must agree exactly."""

import os
import subprocess
import sys

import numpy as np
import pytest

from mobiscope import _kernels as K
from helpers import hav


def _track(rng, n=400):
    # alternating dwell/move segments around Singapore
    lat = np.empty(n)
    lon = np.empty(n)
    t = np.cumsum(rng.choice([60.0, 300.0], size=n))
    x, y = 1.35, 103.8
    for i in range(n):
        if rng.random() < 0.15:
            x += rng.normal(0, 0.01)
            y += rng.normal(0, 0.01)
        lat[i] = x + rng.normal(0, 1e-4)
        lon[i] = y + rng.normal(0, 1e-4)
    start = t
    end = t + 60.0
    return lat, lon, start, end


@pytest.mark.parametrize("seed", range(10))
def test_stay_runs_parity(seed):
    rng = np.random.default_rng(seed)
    lat, lon, s, e = _track(rng)
    a1, b1 = K._stay_runs_jit(lat, lon, s, e, 0.2, 1200.0)
    a2, b2 = K._stay_runs_np(lat, lon, s, e, 0.2, 1200.0)
    np.testing.assert_array_equal(a1, a2)
    np.testing.assert_array_equal(b1, b2)


@pytest.mark.parametrize("seed", range(10))
def test_day_coverage_parity(seed):
    rng = np.random.default_rng(seed)
    start = np.sort(rng.uniform(0, 10 * 86400, 300))
    end = start + rng.uniform(0, 20000, 300)
    first = int(np.floor((start.min() + 28800) / 86400))
    n_days = int(np.ceil((end.max() + 28800) / 86400)) - first + 1
    c1 = K._day_coverage_jit(start, end, 28800.0, first, n_days)
    c2 = K._day_coverage_np(start, end, 28800.0, first, n_days)
    np.testing.assert_allclose(c1, c2, rtol=0, atol=1e-6)
    assert np.all(c1 <= 86400 + 1e-9)


@pytest.mark.parametrize("seed", range(10))
def test_assign_nearest_parity(seed):
    rng = np.random.default_rng(seed)
    X = rng.random((50, 20))
    C = rng.random((4, 20))
    l1, d1 = K._assign_nearest_jit(X, C)
    l2, d2 = K._assign_nearest_np(X, C)
    np.testing.assert_array_equal(l1, l2)
    np.testing.assert_allclose(d1, d2, rtol=1e-12, atol=1e-15)


def test_assign_nearest_ties_lowest_index():
    X = np.array([[0.5, 0.0]])
    C = np.array([[0.0, 0.0], [1.0, 0.0]])
    for fn in (K._assign_nearest_jit, K._assign_nearest_np):
        labels, _ = fn(X, C)
        assert labels[0] == 0


def test_haversine_vec_matches_scalar_oracle():
    rng = np.random.default_rng(0)
    lat = rng.uniform(-80, 80, 100)
    lon = rng.uniform(-170, 170, 100)
    d = K.haversine_km_vec(lat[:-1], lon[:-1], lat[1:], lon[1:])
    expect = [hav(lat[i], lon[i], lat[i + 1], lon[i + 1]) for i in range(99)]
    np.testing.assert_allclose(d, expect, rtol=1e-12)
    for i in range(5):
        assert K._hav_scalar(lat[i], lon[i], lat[i + 1], lon[i + 1]) == pytest.approx(expect[i], rel=1e-12)


def test_env_flag_selects_numpy_path():
    code = "from mobiscope import _kernels as K; print(K.USE_JIT, K.stay_runs.__name__)"
    env = dict(os.environ, MOBISCOPE_DISABLE_JIT="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["False", "_stay_runs_np"]


def test_benchmark_runs(capsys):
    path = os.path.join(os.path.dirname(__file__), "..", "benchmarks", "bench_kernels.py")
    ns: dict = {"__name__": "bench"}
    with open(path) as fh:
        exec(compile(fh.read(), path, "exec"), ns)
    ns["main"](["--n", "500", "--users", "50", "--repeat", "1"])
    out = capsys.readouterr().out
    assert "stay_runs" in out and "assign_nearest" in out
