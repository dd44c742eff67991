"""Exact conditional law of ``Y`` given ``X = x`` for Normal and Student-t models.

For any elliptical model the conditional location is the linear regression
``mu_Y + Omega_YX Omega_XX^{-1} (x - mu_X)`` and the conditional shape is
proportional to the Schur complement
``Omega_YY - Omega_YX Omega_XX^{-1} Omega_XY``. The proportionality
constants depend on the kind:

============  =========================  ==================================
kind          shape scale                covariance scale
============  =========================  ==================================
Normal        1                          1
Student-t     (nu + d2x) / (nu + p_X)    (nu + d2x) / (nu + p_X - 2)
============  =========================  ==================================

and the Student-t degrees of freedom become ``nu + p_X``.
"""

from __future__ import annotations

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import DimensionMismatch
from .model import (
    ConditionalModel,
    EllipticalModel,
    Normal,
    Partition,
    SPDFactor,
    StudentT,
    _frozen,
    symmetrize,
    validate_spd,
)


def _vector(x: ArrayLike, n: int, what: str = "x") -> NDArray[np.float64]:
    v = np.asarray(x, dtype=float).reshape(-1)
    if v.shape[0] != n:
        raise DimensionMismatch(f"{what} has length {v.shape[0]}, expected {n}")
    return v


def mahalanobis_sq(
    x: ArrayLike, mu_x: ArrayLike, omega_xx: ArrayLike | SPDFactor
) -> float:
    """Generalized squared Mahalanobis distance ``(x-mu)^T Omega^{-1} (x-mu)``.

    ``omega_xx`` may be a matrix or an already computed :class:`SPDFactor`.
    The inverse is never formed.
    """
    factor = omega_xx if isinstance(omega_xx, SPDFactor) else validate_spd(omega_xx)
    dev = _vector(x, factor.n) - _vector(mu_x, factor.n, "mu_x")
    return max(factor.quad(dev), 0.0)


def conditional_location(part: Partition, x: ArrayLike) -> NDArray[np.float64]:
    """Conditional centroid ``mu_Y + Omega_YX Omega_XX^{-1} (x - mu_X)``."""
    dev = _vector(x, part.p_x) - part.mu_x
    return part.mu_y + part.omega_yx @ part.factor_xx.solve(dev)


def conditional_shape_base(part: Partition) -> NDArray[np.float64]:
    """Schur complement ``Omega_YY - Omega_YX Omega_XX^{-1} Omega_XY``, symmetrized."""
    s = part.omega_yy - part.omega_yx @ part.factor_xx.solve(part.omega_xy)
    return symmetrize(s, tol=np.inf)


def _check_consistent(model: EllipticalModel, part: Partition) -> None:
    if max(part.idx_x + part.idx_y) >= model.p or not np.array_equal(
        model.omega[np.ix_(part.idx_x, part.idx_y)], part.omega_xy
    ):
        raise DimensionMismatch("partition was not built from this model")


def condition(model: EllipticalModel, part: Partition, x: ArrayLike) -> ConditionalModel:
    """Conditional model of ``Y`` given ``X = x``."""
    _check_consistent(model, part)
    x = _vector(x, part.p_x)
    d2x = mahalanobis_sq(x, part.mu_x, part.factor_xx)
    mu_cond = conditional_location(part, x)
    base = conditional_shape_base(part)
    kind = model.kind
    p_x = part.p_x
    if isinstance(kind, Normal):
        shape_scale = cov_scale = 1.0
    elif isinstance(kind, StudentT):
        nu = kind.nu
        shape_scale = (nu + d2x) / (nu + p_x)
        cov_scale = (nu + d2x) / (nu + (p_x - 2))
    else:  # pragma: no cover - only two kinds ship
        raise TypeError(f"unsupported kind {kind!r}")
    return ConditionalModel(
        mu_cond=_frozen(mu_cond, 1),
        omega_cond_base=_frozen(base, 2),
        kind_cond=kind.conditioned(p_x),
        d2x=d2x,
        shape_scale=shape_scale,
        cov_scale=cov_scale,
        p_x=p_x,
        labels=part.labels_y,
    )


def conditional_covariance(cm: ConditionalModel) -> NDArray[np.float64]:
    return cm.covariance()
