"""Seeded Monte Carlo draws from Normal and Student-t models.

Generator
    numpy ``Philox`` (4x64, 10 rounds), a counter-based bit generator.
    Output is split in fixed blocks of :data:`BLOCK_ROWS` rows; block ``k``
    uses ``SeedSequence(seed, spawn_key=(k,))`` so the result is the same
    regardless of how many workers fill the blocks.
Normal deviates
    ``Generator.standard_normal`` (ziggurat), drawn as a ``rows x p`` array.
Chi-square deviates
    ``Generator.chisquare`` = ``2 * standard_gamma(nu/2)``, the
    Marsaglia-Tsang squeeze/rejection sampler, drawn after the normals of
    the same block.

A Student-t row is ``mu + (L g) / sqrt(u / nu)`` with ``L`` the lower
Cholesky factor of the shape matrix; its covariance is ``nu/(nu-2) * Omega``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .conditioning import _vector
from .errors import InvalidParameters
from .model import ConditionalModel, EllipticalModel, Partition, StudentT

BLOCK_ROWS = 1 << 16


def stream_rng(seed: int, stream: int) -> np.random.Generator:
    """Generator for logical stream ``stream`` of ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream),))
    return np.random.Generator(np.random.Philox(ss))


def _draw_block(model: EllipticalModel, rows: int, seed: int, stream: int) -> NDArray[np.float64]:
    rng = stream_rng(seed, stream)
    g = rng.standard_normal((rows, model.p))
    z = g @ model.factor.lower.T
    if isinstance(model.kind, StudentT):
        nu = model.kind.nu
        u = rng.chisquare(nu, size=rows)
        z /= np.sqrt(u / nu)[:, None]
    z += model.mu
    return z


def sample(
    model: EllipticalModel,
    n: int,
    seed: int,
    workers: int = 1,
    stream_offset: int = 0,
) -> NDArray[np.float64]:
    """Draw ``n`` joint samples, shape ``(n, p)``.

    Deterministic for a given ``(seed, stream_offset)``; ``workers`` only
    changes how blocks are scheduled.
    """
    n = int(n)
    if n < 1:
        raise InvalidParameters(f"n must be >= 1, got {n}")
    starts = list(range(0, n, BLOCK_ROWS))
    jobs = [(min(BLOCK_ROWS, n - s), stream_offset + k) for k, s in enumerate(starts)]
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            blocks = list(ex.map(lambda j: _draw_block(model, j[0], seed, j[1]), jobs))
    else:
        blocks = [_draw_block(model, rows, seed, k) for rows, k in jobs]
    return np.concatenate(blocks, axis=0)


def sample_conditional(cm: ConditionalModel, n: int, seed: int, workers: int = 1) -> NDArray[np.float64]:
    """Draw directly from the conditional law of ``Y`` given ``X = x``.

    Normal: covariance ``cov_scale * base``. Student-t: ``nu + p_X`` degrees
    of freedom and shape ``shape_scale * base``.
    """
    return sample(cm.as_model(), n, seed, workers=workers)


@dataclass
class KernelSample:
    """Joint draws whose X part landed inside the box around ``x``."""

    x: NDArray[np.float64]
    y: NDArray[np.float64]
    n_drawn: int
    halfwidth: NDArray[np.float64]

    @property
    def n(self) -> int:
        return self.y.shape[0]

    def mean(self) -> NDArray[np.float64]:
        return self.y.mean(axis=0)

    def stderr(self) -> NDArray[np.float64]:
        return self.y.std(axis=0, ddof=1) / np.sqrt(self.n)

    def cov(self) -> NDArray[np.float64]:
        return np.atleast_2d(np.cov(self.y, rowvar=False))


def kernel_condition(
    model: EllipticalModel,
    part: Partition,
    x: ArrayLike,
    n: int = 200_000,
    seed: int = 0,
    bandwidth: float = 0.15,
    min_retained: int = 500,
    max_rounds: int = 50,
) -> KernelSample:
    """Brute-force conditioning oracle.

    Samples the joint model and keeps the draws with
    ``|X_i - x_i| < bandwidth * sd(X_i)`` for every stressing coordinate.
    Rounds of ``n`` further draws (fresh streams) are added until at least
    ``min_retained`` rows are kept.
    """
    x = _vector(x, part.p_x)
    sd = np.sqrt(np.diag(model.covariance())[list(part.idx_x)])
    half = bandwidth * sd
    streams_per_round = -(-int(n) // BLOCK_ROWS)
    xs, ys = [], []
    kept = drawn = 0
    for r in range(max_rounds):
        z = sample(model, n, seed, stream_offset=r * streams_per_round)
        drawn += z.shape[0]
        zx = z[:, part.idx_x]
        mask = np.all(np.abs(zx - x) < half, axis=1)
        xs.append(zx[mask])
        ys.append(z[mask][:, part.idx_y])
        kept += int(mask.sum())
        if kept >= min_retained:
            break
    else:
        raise InvalidParameters(
            f"kernel conditioning kept only {kept} of {drawn} draws; x is too far in the tail"
        )
    return KernelSample(np.concatenate(xs), np.concatenate(ys), drawn, half)


def regression_location(
    model: EllipticalModel,
    part: Partition,
    x: ArrayLike,
    n: int = 200_000,
    seed: int = 0,
    batches: int = 20,
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Monte Carlo estimate of ``E[Y | X = x]`` by least squares on joint draws.

    Elliptical conditional means are exactly linear in ``x``, so an
    ordinary regression of ``Y`` on ``[1, X]`` is unbiased for any ``p_X``
    (unlike box conditioning, which starves as ``p_X`` grows). Returns the
    estimate and a batch-means standard error.
    """
    x = _vector(x, part.p_x)
    z = sample(model, n, seed)
    preds = []
    for chunk in np.array_split(z, batches):
        design = np.column_stack([np.ones(chunk.shape[0]), chunk[:, part.idx_x]])
        coef, *_ = np.linalg.lstsq(design, chunk[:, part.idx_y], rcond=None)
        preds.append(np.concatenate([[1.0], x]) @ coef)
    preds = np.asarray(preds)
    return preds.mean(axis=0), preds.std(axis=0, ddof=1) / np.sqrt(batches)
