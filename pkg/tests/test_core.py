import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from critlab.errors import DiscretizationError, UnstableMatrixError
from critlab.ou import StabilityMatrix, relaxation_time, simulate_multiou, simulate_ou
from critlab.rng import RngStream, as_stream
from critlab.series import NoiseSpec, TimeSeries, write_columns


@given(st.integers(0, 2**64 - 1), st.integers(0, 1000))
@settings(max_examples=25, deadline=None)
def test_equal_streams_identical(seed, idx):
    a = RngStream(seed, idx).generator().random(8)
    b = RngStream(seed, idx).generator().random(8)
    assert np.array_equal(a, b)


def test_streams_independent():
    a = RngStream(7, 0).generator().standard_normal(100_000)
    b = RngStream(7, 1).generator().standard_normal(100_000)
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.01
    c = RngStream(7, 0).child(3).generator().standard_normal(100_000)
    assert abs(np.corrcoef(a, c)[0, 1]) < 0.01


def test_stream_validation():
    with pytest.raises(ValueError):
        RngStream(-1)
    with pytest.raises(ValueError):
        RngStream(2**64)
    with pytest.raises(ValueError):
        RngStream(1, -2)
    assert as_stream(5) == RngStream(5)


def test_noise_spec_rejects_negative_sigma():
    with pytest.raises(ValueError):
        NoiseSpec(-0.1)


def test_timeseries_roundtrip(tmp_path):
    ts = TimeSeries(0.5, np.array([[1.0, 2.0], [3.0, 4.0 / 3.0], [5.0, -6.0]]))
    ts.to_csv(tmp_path / "ts.csv")
    header = (tmp_path / "ts.csv").read_text().splitlines()[0]
    assert header == "t,x0,x1"
    back = TimeSeries.from_csv(tmp_path / "ts.csv")
    assert back.dt == 0.5
    assert np.array_equal(back.values, ts.values)


@given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=1, max_size=30))
@settings(max_examples=40, deadline=None)
def test_write_columns_full_precision(tmp_path_factory, xs):
    path = tmp_path_factory.mktemp("cols") / "c.csv"
    write_columns(path, ["x"], [np.array(xs)])
    back = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=1)
    assert np.array_equal(back, np.array(xs))


def test_timeseries_validation():
    with pytest.raises(ValueError):
        TimeSeries(0.0, [1.0])
    with pytest.raises(ValueError):
        TimeSeries(1.0, [[1.0, 2.0]], labels=["a"])


def test_stability_matrix_validation():
    with pytest.raises(ValueError):
        StabilityMatrix([[1.0, 2.0]])
    with pytest.raises(ValueError):
        StabilityMatrix([[np.nan]])
    assert StabilityMatrix(np.diag([0.5, 2.0])).kappa_star() == 0.5


def test_ou_noiseless_decay():
    ts = simulate_ou(1.0, NoiseSpec(0.0), 1.0, 0.001, 3000, RngStream(0))
    t = ts.times
    # Euler: (1 - dt)^n -> exp(-t) with O(dt) relative error
    assert np.allclose(ts.component(0), np.exp(-t), rtol=2e-3, atol=0)
    assert np.allclose(ts.component(0), (1 - 0.001) ** np.arange(3001), rtol=1e-12, atol=0)


def test_ou_guards():
    with pytest.raises(DiscretizationError):
        simulate_ou(1.0, NoiseSpec(1.0), 0.0, 0.1, 10, RngStream(0))
    with pytest.raises(DiscretizationError):
        simulate_ou(1.0, NoiseSpec(1.0), 0.0, 0.0, 10, RngStream(0))
    with pytest.raises(UnstableMatrixError):
        simulate_multiou(np.diag([1.0, -0.1]), NoiseSpec(1.0), 0.01, 10, RngStream(0))
    with pytest.raises(UnstableMatrixError):
        simulate_multiou(np.diag([1.0, 0.0]), NoiseSpec(1.0), 0.01, 10, RngStream(0))


def test_ou_variance_and_relaxation():
    ts = simulate_ou(1.0, NoiseSpec(1.0), 0.0, 0.01, 1_000_000, RngStream(1))
    x = ts.component(0)[1000:]
    assert abs(x.var() - 0.5) < 0.05
    assert abs(relaxation_time(ts) - 1.0) < 0.2


def test_ou_variance_ratio():
    a = simulate_ou(0.1, NoiseSpec(1.0), 0.0, 0.05, 1_000_000, RngStream(2)).component(0)
    b = simulate_ou(1.0, NoiseSpec(1.0), 0.0, 0.05, 1_000_000, RngStream(3)).component(0)
    assert 8 < a.var() / b.var() < 12.5


def test_relaxation_time_white_noise():
    ts = TimeSeries(0.1, RngStream(4).generator().standard_normal(100_000))
    assert relaxation_time(ts) == pytest.approx(0.1)


def test_multiou_diagonal_variances():
    ts = simulate_multiou(np.diag([0.05, 1.0]), NoiseSpec(1.0), 0.05, 1_000_000, RngStream(5))
    v = ts.values[20_000:].var(axis=0)
    assert abs(v[0] - 10.0) < 1.5
    assert abs(v[1] - 0.5) < 0.03
    assert abs(np.corrcoef(ts.values[20_000:].T)[0, 1]) < 0.05


def test_multiou_relaxation_doubles_when_kappa_halves():
    t1 = relaxation_time(TimeSeries(0.05, simulate_multiou(np.diag([0.2, 1.0]), NoiseSpec(1.0), 0.05, 400_000,
                                                          RngStream(6)).component(0)))
    t2 = relaxation_time(TimeSeries(0.05, simulate_multiou(np.diag([0.1, 1.0]), NoiseSpec(1.0), 0.05, 400_000,
                                                          RngStream(6)).component(0)))
    assert 1.6 < t2 / t1 < 2.5


def test_ou_deterministic():
    a = simulate_ou(1.0, NoiseSpec(1.0), 0.0, 0.01, 1000, RngStream(9, 2))
    b = simulate_ou(1.0, NoiseSpec(1.0), 0.0, 0.01, 1000, RngStream(9, 2))
    assert np.array_equal(a.values, b.values)
