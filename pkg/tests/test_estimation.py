import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ellipstress.errors import (
    DimensionMismatch,
    InputError,
    InvalidNu,
    InvalidQuantile,
    KurtosisTooLow,
    NonPositivePrice,
    RankDeficient,
    UnmappedTicker,
)
from ellipstress.estimation import (
    NU_MAX,
    ReturnPanel,
    condition_number,
    empirical_var_vector,
    estimate_nu,
    fit_gaussian,
    fit_student_t,
    group_indices,
    log_returns,
    panel_from_prices,
)
from ellipstress.model import EllipticalModel, Normal, StudentT
from ellipstress.sampler import sample
from oracles import type7_quantile

# twenty hand-picked returns; type-7 positions are worked out in the tests below
HAND = [
    0.012, -0.031, 0.004, -0.008, 0.021, -0.044, 0.0, 0.017, -0.002, 0.009,
    -0.015, 0.026, -0.027, 0.005, -0.011, 0.033, -0.006, 0.014, -0.019, 0.001,
]


def panel(returns, tickers=None, groups=None):
    r = np.atleast_2d(np.asarray(returns, dtype=float))
    if r.shape[0] == 1 and r.shape[1] > 1 and tickers is not None and len(tickers) == 1:
        r = r.T
    tickers = tickers or [f"t{i}" for i in range(r.shape[1])]
    dates = [f"d{i:06d}" for i in range(r.shape[0])]
    return ReturnPanel(dates, tickers, r, groups)


def simulated(model, n, seed):
    return panel(sample(model, n, seed), list(model.labels))


class TestLogReturns:
    def test_constant(self):
        np.testing.assert_array_equal(log_returns(np.full((4, 3), 7.5)), 0.0)

    def test_doubling(self):
        assert log_returns([[1.0], [2.0]])[0, 0] == pytest.approx(0.6931471805599453, rel=1e-15)

    def test_hand_panel(self):
        prices = [[100.0, 50.0], [110.0, 45.0], [99.0, 45.0]]
        expected = [[math.log(1.1), math.log(0.9)], [math.log(0.9), 0.0]]
        np.testing.assert_allclose(log_returns(prices), expected, rtol=1e-14)

    def test_nonpositive(self):
        with pytest.raises(NonPositivePrice) as ei:
            log_returns([[1.0, 2.0], [1.0, -2.0]], tickers=["a", "b"], dates=["x", "y"])
        assert ei.value.ticker == "b"
        assert ei.value.date == "y"

    def test_shape(self):
        with pytest.raises(DimensionMismatch):
            log_returns([[1.0, 2.0]])

    def test_missing_column_dropped(self):
        prices = [[1.0, 2.0, 3.0], [1.1, math.nan, 3.3], [1.2, 2.2, 3.1]]
        with pytest.warns(UserWarning, match="b"):
            p = panel_from_prices(["d0", "d1", "d2"], ["a", "b", "c"], prices)
        assert p.tickers == ("a", "c")
        assert p.dropped == ("b",)
        assert p.dates == ("d1", "d2")


class TestPanel:
    def test_validation(self):
        with pytest.raises(DimensionMismatch):
            ReturnPanel(["a"], ["x", "y"], [[1.0]])
        with pytest.raises(InputError):
            ReturnPanel(["a"], ["x"], [[math.nan]])
        with pytest.raises(InputError):
            ReturnPanel(["a"], ["x", "x"], [[1.0, 2.0]])


class TestFit:
    def test_independent_columns(self):
        m = EllipticalModel([0.0, 0.0], np.eye(2))
        fit = fit_gaussian(simulated(m, 100_000, 3))
        # sd of a sample correlation near zero is 1/sqrt(T)
        assert abs(fit.omega[0, 1]) < 3 / math.sqrt(100_000)

    def test_mean_recovered(self):
        mu = np.array([0.3, -0.1, 0.05])
        om = np.array([[1.0, 0.3, 0.1], [0.3, 0.5, 0.0], [0.1, 0.0, 0.8]])
        fit = fit_gaussian(simulated(EllipticalModel(mu, om), 100_000, 4))
        se = np.sqrt(np.diag(om) / 100_000)
        assert np.all(np.abs(fit.mu - mu) < 3 * se)
        assert isinstance(fit.kind, Normal)

    def test_duplicate_column(self):
        rng = np.random.default_rng(1)
        r = rng.normal(size=(500, 3))
        r[:, 2] = r[:, 0]
        with pytest.raises(RankDeficient) as ei:
            fit_gaussian(panel(r, ["a", "b", "c"]))
        assert set(ei.value.pair) == {"a", "c"}

    def test_too_few_rows(self):
        with pytest.raises(InputError):
            fit_gaussian(panel(np.ones((3, 3))))

    def test_round_trip(self):
        om = np.array([[1.0, 0.4, -0.2], [0.4, 2.0, 0.3], [-0.2, 0.3, 0.7]])
        first = fit_gaussian(simulated(EllipticalModel(np.zeros(3), om), 100_000, 8))
        again = fit_gaussian(simulated(first, 100_000, 9))
        rel = np.linalg.norm(again.omega - first.omega) / np.linalg.norm(first.omega)
        assert rel < 0.05
        se = np.sqrt(np.diag(first.omega) / 100_000)
        assert np.all(np.abs(again.mu - first.mu) < 3 * se)

    def test_nu_recovered(self):
        om = 0.5 * np.eye(4) + 0.1
        p = simulated(EllipticalModel(np.zeros(4), om, StudentT(8)), 100_000, 0)
        nu = estimate_nu(p)
        assert 6.5 <= nu <= 9.5
        assert fit_student_t(p).kind == StudentT(nu)

    def test_explicit_nu_rescale(self):
        rng = np.random.default_rng(2)
        p = panel(rng.normal(size=(300, 3)))
        fit = fit_student_t(p, nu=6)
        cov = np.cov(p.returns, rowvar=False, ddof=1)
        np.testing.assert_allclose(fit.omega, 4 / 6 * cov, rtol=1e-12)
        np.testing.assert_allclose(fit.covariance(), cov, rtol=1e-12)
        with pytest.raises(InvalidNu):
            fit_student_t(p, nu=2)

    def test_gaussian_data(self):
        p = simulated(EllipticalModel(np.zeros(3), np.eye(3)), 100_000, 5)
        try:
            nu = estimate_nu(p)
        except KurtosisTooLow:
            return
        assert nu == NU_MAX

    def test_platykurtic_rejected(self):
        rng = np.random.default_rng(6)
        with pytest.raises(KurtosisTooLow):
            fit_student_t(panel(rng.uniform(-1, 1, size=(5000, 2))))

    def test_condition_number(self):
        m = EllipticalModel(np.zeros(2), np.diag([4.0, 0.5]))
        assert condition_number(m) == 8.0


class TestEmpiricalVar:
    def test_median_of_symmetric(self):
        r = np.array([-3.0, -1.0, 0.0, 1.0, 3.0])
        assert empirical_var_vector(panel(r[:, None]), None, 0.5)[0] == 0.0

    def test_hand_values(self):
        # sorted: -0.044 -0.031 -0.027 -0.019 ...; h = 19 * 0.05 = 0.95
        # quantile = -0.044 + 0.95 * 0.013 = -0.03165
        v = empirical_var_vector(panel(np.array(HAND)[:, None]), [0], 0.95)[0]
        assert v == pytest.approx(0.03165, abs=1e-15)
        assert v == pytest.approx(-type7_quantile(HAND, 0.05), abs=1e-15)

    def test_standard_normal(self):
        r = np.random.default_rng(7).standard_normal((200_000, 1))
        # quantile sd ~ sqrt(q(1-q)) / (sqrt(n) phi(z)) ~ 0.0047
        assert empirical_var_vector(panel(r), None, 0.95)[0] == pytest.approx(1.6448536, abs=0.015)

    def test_floor_at_zero(self):
        r = np.array([[0.1, 0.2], [0.3, 0.4], [0.5, 0.6]])
        np.testing.assert_array_equal(empirical_var_vector(panel(r), None, 0.95), [0.0, 0.0])

    def test_invalid_q(self):
        with pytest.raises(InvalidQuantile):
            empirical_var_vector(panel(np.ones((3, 1))), None, 0.0)

    @settings(max_examples=50, deadline=None)
    @given(
        st.lists(st.floats(-1, 1, allow_nan=False), min_size=2, max_size=60),
        st.floats(0.01, 0.99),
        st.floats(0.01, 0.99),
    )
    def test_monotone_in_q(self, values, a, b):
        lo, hi = sorted((a, b))
        p = panel(np.array(values)[:, None])
        assert empirical_var_vector(p, None, lo)[0] <= empirical_var_vector(p, None, hi)[0] + 1e-15

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-1, 1, allow_nan=False), min_size=2, max_size=60), st.floats(0.01, 0.99))
    def test_matches_hand_quantile(self, values, q):
        v = empirical_var_vector(panel(np.array(values)[:, None]), None, q)[0]
        assert v == pytest.approx(max(-type7_quantile(values, 1 - q), 0.0), abs=1e-12)


class TestGroups:
    def test_partition(self):
        p = panel(np.zeros((3, 4)), ["a", "b", "c", "d"], {"a": "Z", "b": "Y", "c": "Z", "d": "Y"})
        assert group_indices(p) == {"Y": [1, 3], "Z": [0, 2]}

    def test_unmapped(self):
        p = panel(np.zeros((3, 3)), ["a", "b", "c"], {"a": "x"})
        with pytest.raises(UnmappedTicker) as ei:
            group_indices(p)
        assert ei.value.tickers == ["b", "c"]

    def test_extras_warn(self):
        p = panel(np.zeros((3, 2)), ["a", "b"], {"a": "x", "b": "y", "zz": "x"})
        with pytest.warns(UserWarning, match="zz"):
            assert group_indices(p) == {"x": [0], "y": [1]}

    def test_no_groups(self):
        with pytest.raises(InputError):
            group_indices(panel(np.zeros((3, 2))))
