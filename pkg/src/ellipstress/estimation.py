"""From price panels to fitted elliptical models."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import stats

from .errors import (
    DimensionMismatch,
    InputError,
    InvalidNu,
    InvalidQuantile,
    KurtosisTooLow,
    NonPositivePrice,
    NotPositiveDefinite,
    RankDeficient,
    UnmappedTicker,
)
from .model import EllipticalModel, Normal, StudentT

NU_MIN = 4.5
NU_MAX = 50.0


@dataclass(frozen=True, eq=False)
class ReturnPanel:
    """Date-indexed matrix of log-returns, one column per ticker.

    ``dates[t]`` labels the period ending at row ``t``. ``groups`` maps
    ticker to group (sector) name and may be ``None``.
    """

    dates: tuple[str, ...]
    tickers: tuple[str, ...]
    returns: NDArray[np.float64]
    groups: Mapping[str, str] | None = None
    dropped: tuple[str, ...] = field(default=())

    def __post_init__(self):
        r = np.array(self.returns, dtype=float, copy=True)
        if r.ndim != 2:
            raise DimensionMismatch(f"returns must be 2-D, got shape {r.shape}")
        if r.shape != (len(self.dates), len(self.tickers)):
            raise DimensionMismatch(
                f"returns shape {r.shape} does not match {len(self.dates)} dates x {len(self.tickers)} tickers"
            )
        if not np.all(np.isfinite(r)):
            raise InputError("returns contain missing or non-finite values")
        if len(set(self.tickers)) != len(self.tickers):
            raise InputError("duplicate tickers")
        r.setflags(write=False)
        object.__setattr__(self, "returns", r)
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "tickers", tuple(self.tickers))
        if self.groups is not None:
            object.__setattr__(self, "groups", dict(self.groups))

    @property
    def T(self) -> int:
        return self.returns.shape[0]

    @property
    def p(self) -> int:
        return self.returns.shape[1]


def log_returns(
    prices: ArrayLike,
    tickers: Sequence[str] | None = None,
    dates: Sequence[str] | None = None,
) -> NDArray[np.float64]:
    """``r[t, i] = log(price[t+1, i] / price[t, i])``."""
    P = np.asarray(prices, dtype=float)
    if P.ndim != 2 or P.shape[0] < 2:
        raise DimensionMismatch(f"need a T x p price matrix with T >= 2, got shape {P.shape}")
    bad = np.argwhere(~(P > 0))
    if bad.size:
        t, i = (int(v) for v in bad[0])
        ticker = tickers[i] if tickers is not None else f"column {i}"
        date = dates[t] if dates is not None else f"row {t}"
        raise NonPositivePrice(ticker, date, float(P[t, i]))
    return np.diff(np.log(P), axis=0)


def panel_from_prices(
    dates: Sequence[str],
    tickers: Sequence[str],
    prices: ArrayLike,
    groups: Mapping[str, str] | None = None,
) -> ReturnPanel:
    """Build a :class:`ReturnPanel` from a price matrix.

    Columns with any missing (NaN) price are dropped with a warning; no
    imputation is attempted.
    """
    P = np.asarray(prices, dtype=float)
    missing = np.isnan(P).any(axis=0)
    dropped = tuple(t for t, m in zip(tickers, missing) if m)
    if dropped:
        warnings.warn(f"dropping {len(dropped)} column(s) with missing prices: {', '.join(dropped)}")
    keep = [t for t, m in zip(tickers, missing) if not m]
    P = P[:, ~missing]
    r = log_returns(P, keep, dates)
    return ReturnPanel(tuple(dates[1:]), tuple(keep), r, groups, dropped)


def _require_fit_size(panel: ReturnPanel) -> None:
    if panel.T < panel.p + 2:
        raise InputError(f"need at least p + 2 = {panel.p + 2} return rows, got {panel.T}")


def _culprit_pair(panel: ReturnPanel, cov: NDArray[np.float64]) -> tuple[str, str]:
    d = np.sqrt(np.diag(cov))
    with np.errstate(divide="ignore", invalid="ignore"):
        corr = cov / np.outer(d, d)
    score = np.abs(np.nan_to_num(corr, nan=1.0))
    np.fill_diagonal(score, -1.0)
    i, j = np.unravel_index(np.argmax(score), score.shape)
    i, j = sorted((int(i), int(j)))
    return panel.tickers[i], panel.tickers[j]


def sample_moments(panel: ReturnPanel) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Column means and the 1/(T-1) sample covariance."""
    r = panel.returns
    mu = r.mean(axis=0)
    cov = np.atleast_2d(np.cov(r, rowvar=False, ddof=1))
    return mu, 0.5 * (cov + cov.T)


def _checked_model(panel, mu, omega, kind, cov) -> EllipticalModel:
    try:
        return EllipticalModel(mu, omega, kind, panel.tickers)
    except NotPositiveDefinite as exc:
        a, b = _culprit_pair(panel, cov)
        raise RankDeficient(
            f"sample covariance is not positive definite (pivot {exc.pivot}); "
            f"most collinear pair: {a}, {b}",
            pair=(a, b),
        ) from exc


def fit_gaussian(panel: ReturnPanel) -> EllipticalModel:
    """Normal model with sample mean and sample covariance."""
    _require_fit_size(panel)
    mu, cov = sample_moments(panel)
    return _checked_model(panel, mu, cov, Normal(), cov)


def excess_kurtosis(panel: ReturnPanel) -> NDArray[np.float64]:
    """Per-column moment estimator ``m4 / m2**2 - 3`` (no small-sample correction)."""
    return stats.kurtosis(panel.returns, axis=0, fisher=True, bias=True)


def estimate_nu(panel: ReturnPanel) -> float:
    """Degrees of freedom by matching the average excess kurtosis.

    A Student-t marginal has excess kurtosis ``6 / (nu - 4)``, so
    ``nu = 4 + 6 / mean(kurtosis)``, clamped to ``[4.5, 50]``.
    """
    k = float(np.mean(excess_kurtosis(panel)))
    if not k > 0:
        raise KurtosisTooLow(
            f"mean excess kurtosis {k:.4g} <= 0; the data look Gaussian, fit a Normal model instead"
        )
    return float(np.clip(4.0 + 6.0 / k, NU_MIN, NU_MAX))


def fit_student_t(panel: ReturnPanel, nu: float | None = None) -> EllipticalModel:
    """Student-t model whose implied covariance equals the sample covariance.

    The shape matrix is ``(nu - 2) / nu`` times the sample covariance. When
    ``nu`` is not given it is estimated with :func:`estimate_nu`.
    """
    _require_fit_size(panel)
    if nu is not None:
        nu = float(nu)
        if not nu > 2:
            raise InvalidNu(f"nu must be > 2, got {nu}")
    else:
        nu = estimate_nu(panel)
    mu, cov = sample_moments(panel)
    omega = (nu - 2.0) / nu * cov
    return _checked_model(panel, mu, omega, StudentT(nu), cov)


def empirical_var_vector(panel: ReturnPanel, idx: Sequence[int] | None, q: float) -> NDArray[np.float64]:
    """Per-variable empirical VaR as positive loss magnitudes.

    The ``1 - q`` quantile of returns (linear interpolation between order
    statistics), negated and floored at zero.
    """
    if not 0.0 < q < 1.0:
        raise InvalidQuantile(f"q must lie in (0, 1), got {q}")
    r = panel.returns if idx is None else panel.returns[:, list(idx)]
    v = -np.quantile(r, 1.0 - q, axis=0, method="linear")
    return np.maximum(v, 0.0)


def group_indices(panel: ReturnPanel, groups: Mapping[str, str] | None = None) -> dict[str, list[int]]:
    """Group name -> column indices; groups sorted by name, indices in column order."""
    groups = panel.groups if groups is None else groups
    if groups is None:
        raise InputError("panel has no group map")
    missing = [t for t in panel.tickers if t not in groups]
    if missing:
        raise UnmappedTicker(missing)
    extra = sorted(set(groups) - set(panel.tickers))
    if extra:
        warnings.warn(f"ignoring {len(extra)} group-map ticker(s) not in the panel: {', '.join(extra)}")
    out: dict[str, list[int]] = {}
    for i, t in enumerate(panel.tickers):
        out.setdefault(groups[t], []).append(i)
    return {g: out[g] for g in sorted(out)}


def condition_number(model: EllipticalModel) -> float:
    w = np.linalg.eigvalsh(model.omega)
    return float(w[-1] / w[0])
