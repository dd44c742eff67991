"""Generator for the bundled synthetic sector dataset.

60 tickers in 10 sectors of 6, daily log-returns from a known Student-t
(nu = 8) model with a market factor and one factor per sector, T = 2000
returns (2001 prices), seed 42. See ``data/DATASET.md`` for the card.

Correlation of stock ``i`` (sector ``g``, position ``k = 0..5``)::

    r_i = beta_i * m + gamma_i * s_g + e_i,   var(r_i) = 1 before scaling
    beta_i  = b_g * (0.6 + 0.16 k)     rising within the sector
    gamma_i = c_g * (1.4 - 0.16 k)     falling within the sector

so the market and sector loadings of a sector point in different directions.
Volatilities scale the sectors from quiet (Utilities) to wild (Technology).
"""

from __future__ import annotations

import datetime as _dt
import io
import os
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .model import EllipticalModel, StudentT
from .sampler import sample

SEED = 42
NU = 8.0
T_RETURNS = 2000
PER_SECTOR = 6
START_DATE = _dt.date(2012, 1, 2)
START_PRICE = 100.0

# name, ticker prefix, market loading b_g, sector loading c_g, daily vol
SECTORS = (
    ("Basic Materials", "BM", 0.55, 0.50, 0.022),
    ("Consumer Goods", "CG", 0.45, 0.40, 0.012),
    ("Consumer Services", "CS", 0.50, 0.35, 0.014),
    ("Financials", "FN", 0.65, 0.40, 0.018),
    ("Health Care", "HC", 0.30, 0.45, 0.015),
    ("Industrials", "IN", 0.60, 0.35, 0.016),
    ("Oil & Gas", "OG", 0.40, 0.60, 0.026),
    ("Technology", "TC", 0.50, 0.50, 0.030),
    ("Telecommunications", "TL", 0.20, 0.45, 0.011),
    ("Utilities", "UT", 0.15, 0.55, 0.008),
)
DRIFT = 2e-4


@dataclass(frozen=True)
class SyntheticDataset:
    model: EllipticalModel
    dates: tuple[str, ...]
    tickers: tuple[str, ...]
    groups: dict[str, str]
    prices: np.ndarray


def true_model() -> EllipticalModel:
    """Ground-truth Student-t model of daily log-returns."""
    tickers, betas, gammas, vols, sector_of = [], [], [], [], []
    for g, (_, prefix, b, c, vol) in enumerate(SECTORS):
        for k in range(PER_SECTOR):
            tickers.append(f"{prefix}{k + 1:02d}")
            betas.append(b * (0.6 + 0.16 * k))
            gammas.append(c * (1.4 - 0.16 * k))
            vols.append(vol * (0.85 + 0.06 * k))
            sector_of.append(g)
    beta, gamma, vol = map(np.asarray, (betas, gammas, vols))
    sector_of = np.asarray(sector_of)
    same = sector_of[:, None] == sector_of[None, :]
    corr = np.outer(beta, beta) + np.where(same, np.outer(gamma, gamma), 0.0)
    np.fill_diagonal(corr, 1.0)
    cov = corr * np.outer(vol, vol)
    omega = (NU - 2.0) / NU * cov
    return EllipticalModel(np.full(len(tickers), DRIFT), omega, StudentT(NU), tuple(tickers))


def business_days(start: _dt.date, n: int) -> list[str]:
    out, d = [], start
    while len(out) < n:
        if d.weekday() < 5:
            out.append(d.isoformat())
        d += _dt.timedelta(days=1)
    return out


def generate(seed: int = SEED, T: int = T_RETURNS) -> SyntheticDataset:
    model = true_model()
    r = sample(model, T, seed)
    logp = np.vstack([np.zeros(model.p), np.cumsum(r, axis=0)])
    prices = START_PRICE * np.exp(logp)
    groups = {t: SECTORS[i // PER_SECTOR][0] for i, t in enumerate(model.labels)}
    return SyntheticDataset(model, tuple(business_days(START_DATE, T + 1)), model.labels, groups, prices)


def prices_csv(ds: SyntheticDataset) -> str:
    buf = io.StringIO()
    buf.write("date," + ",".join(ds.tickers) + "\n")
    for d, row in zip(ds.dates, ds.prices):
        buf.write(d + "," + ",".join(format(v, ".10g") for v in row) + "\n")
    return buf.getvalue()


def sectors_csv(ds: SyntheticDataset) -> str:
    return "ticker,group\n" + "".join(f"{t},{ds.groups[t]}\n" for t in ds.tickers)


def bundled_paths() -> tuple[str, str]:
    """Paths of the bundled ``prices.csv`` and ``sectors.csv``."""
    base = resources.files("ellipstress") / "data"
    return str(base / "synthetic_prices.csv"), str(base / "synthetic_sectors.csv")


def write_bundled(directory: str) -> tuple[str, str]:
    ds = generate()
    p = os.path.join(directory, "synthetic_prices.csv")
    s = os.path.join(directory, "synthetic_sectors.csv")
    with open(p, "w", encoding="utf-8", newline="") as fh:
        fh.write(prices_csv(ds))
    with open(s, "w", encoding="utf-8", newline="") as fh:
        fh.write(sectors_csv(ds))
    return p, s
