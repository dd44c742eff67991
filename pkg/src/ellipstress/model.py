"""Domain types for elliptical models and the SPD linear algebra underneath.

Everything here is immutable after construction: arrays are copied and
flagged read-only, so models and partitions can be shared across workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import linalg, stats

from .errors import (
    DimensionMismatch,
    EmptySet,
    IndexOutOfRange,
    InvalidNu,
    NotPositiveDefinite,
    NotSymmetric,
    OverlappingSets,
)

SYMMETRY_TOL = 1e-10
PIVOT_TOL = 1e-12


# ---------------------------------------------------------------------------
# distribution kinds


@dataclass(frozen=True)
class Normal:
    """Multivariate normal kind; density generator exp(-d2/2)."""

    name = "normal"

    @property
    def cov_factor(self) -> float:
        return 1.0

    def standard_ppf(self, q: float) -> float:
        return float(stats.norm.ppf(q))

    def conditioned(self, p_x: int) -> "Normal":
        return self


@dataclass(frozen=True)
class StudentT:
    """Multivariate Student-t kind with ``nu`` degrees of freedom.

    Only ``nu > 2`` is accepted so that the covariance ``nu/(nu-2) * omega``
    exists.
    """

    nu: float
    name = "student_t"

    def __post_init__(self):
        nu = float(self.nu)
        if not np.isfinite(nu) or nu <= 2.0:
            raise InvalidNu(f"Student-t degrees of freedom must be > 2, got {self.nu!r}")
        object.__setattr__(self, "nu", nu)

    @property
    def cov_factor(self) -> float:
        return self.nu / (self.nu - 2.0)

    def standard_ppf(self, q: float) -> float:
        return float(stats.t.ppf(q, self.nu))

    def conditioned(self, p_x: int) -> "StudentT":
        return StudentT(self.nu + p_x)


DistributionKind = Union[Normal, StudentT]


def kind_from_name(name: str, nu: float | None = None) -> DistributionKind:
    key = name.strip().lower().replace("-", "_")
    if key in ("normal", "gaussian", "norm"):
        return Normal()
    if key in ("student_t", "studentt", "t", "student"):
        if nu is None:
            raise InvalidNu("Student-t kind needs nu")
        return StudentT(nu)
    raise ValueError(f"unknown distribution kind {name!r}")


# ---------------------------------------------------------------------------
# SPD factorization


@dataclass(frozen=True, eq=False)
class SPDFactor:
    """Lower Cholesky factor of an SPD matrix together with its log-determinant."""

    lower: NDArray[np.float64]
    logdet: float

    @property
    def n(self) -> int:
        return self.lower.shape[0]

    def solve(self, b: ArrayLike) -> NDArray[np.float64]:
        """Solve ``M v = b`` for the factored matrix ``M``."""
        return linalg.cho_solve((self.lower, True), np.asarray(b, dtype=float), check_finite=False)

    def quad(self, v: ArrayLike) -> float:
        """``v^T M^{-1} v`` via one triangular solve."""
        v = np.asarray(v, dtype=float)
        w = linalg.solve_triangular(self.lower, v, lower=True, check_finite=False)
        return float(w @ w)

    @property
    def pivots(self) -> NDArray[np.float64]:
        return np.diag(self.lower) ** 2


def _max_relative_asymmetry(m: NDArray[np.float64]) -> float:
    d = np.sqrt(np.abs(np.diag(m)))
    scale = np.outer(d, d)
    scale = np.maximum(scale, np.maximum(np.abs(m), np.abs(m.T)))
    diff = np.abs(m - m.T)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(diff == 0.0, 0.0, diff / scale)
    rel = np.where(np.isfinite(rel), rel, np.inf)
    return float(rel.max()) if rel.size else 0.0


def symmetrize(m: ArrayLike, tol: float = SYMMETRY_TOL) -> NDArray[np.float64]:
    """Return ``(m + m.T)/2`` after checking the asymmetry is within ``tol``."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {m.shape}")
    asym = _max_relative_asymmetry(m)
    if asym > tol:
        raise NotSymmetric(asym, tol)
    return 0.5 * (m + m.T)


def validate_spd(
    m: ArrayLike,
    labels: Sequence[str] | None = None,
    sym_tol: float = SYMMETRY_TOL,
    pivot_tol: float = PIVOT_TOL,
) -> SPDFactor:
    """Factor a symmetric positive definite matrix.

    The input is symmetrized first (asymmetry above ``sym_tol`` raises
    :class:`NotSymmetric`). A factorization pivot below ``pivot_tol`` times
    the largest diagonal entry counts as a failure, so near-singular
    matrices are rejected rather than silently regularized.
    """
    m = symmetrize(m, sym_tol)
    n = m.shape[0]
    if n == 0:
        raise DimensionMismatch("empty matrix")
    if not np.all(np.isfinite(m)):
        raise NotPositiveDefinite(0, labels, "non-finite entries")
    c, info = linalg.lapack.dpotrf(m, lower=1, clean=1)
    if info > 0:
        raise NotPositiveDefinite(info - 1, labels, "leading minor not positive")
    if info < 0:  # pragma: no cover - LAPACK argument error
        raise RuntimeError(f"dpotrf argument error {info}")
    piv = np.diag(c) ** 2
    floor = pivot_tol * float(np.max(np.diag(m)))
    bad = np.flatnonzero(piv < floor)
    if bad.size:
        raise NotPositiveDefinite(int(bad[0]), labels, "near-singular pivot")
    logdet = 2.0 * float(np.sum(np.log(np.diag(c))))
    c.setflags(write=False)
    return SPDFactor(lower=c, logdet=logdet)


def _frozen(a: ArrayLike, ndim: int) -> NDArray[np.float64]:
    out = np.array(a, dtype=float, copy=True, ndmin=ndim)
    out.setflags(write=False)
    return out


# ---------------------------------------------------------------------------
# models and partitions


@dataclass(frozen=True, eq=False)
class EllipticalModel:
    """Joint elliptical model: location ``mu``, shape ``omega``, kind and labels.

    For the normal kind ``omega`` is the covariance; for Student-t the
    covariance is ``nu/(nu-2) * omega``.
    """

    mu: NDArray[np.float64]
    omega: NDArray[np.float64]
    kind: DistributionKind = field(default_factory=Normal)
    labels: tuple[str, ...] = ()
    factor: SPDFactor = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        mu = np.array(self.mu, dtype=float, copy=True).reshape(-1)
        omega = np.asarray(self.omega, dtype=float)
        p = mu.shape[0]
        if omega.shape != (p, p):
            raise DimensionMismatch(f"mu has length {p} but omega has shape {omega.shape}")
        labels = tuple(self.labels) if len(self.labels) else tuple(f"v{i}" for i in range(p))
        if len(labels) != p:
            raise DimensionMismatch(f"{len(labels)} labels for {p} variables")
        if not np.all(np.isfinite(mu)):
            raise DimensionMismatch("mu contains non-finite values")
        omega = symmetrize(omega)
        factor = validate_spd(omega, labels)
        object.__setattr__(self, "mu", _frozen(mu, 1))
        object.__setattr__(self, "omega", _frozen(omega, 2))
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "factor", factor)

    @property
    def p(self) -> int:
        return self.mu.shape[0]

    def covariance(self) -> NDArray[np.float64]:
        return self.kind.cov_factor * self.omega

    def marginal(self, idx: Sequence[int]) -> "EllipticalModel":
        """Marginal over ``idx``: elliptical marginals keep the sub-blocks."""
        idx = _check_indices(idx, self.p, "idx")
        return EllipticalModel(
            self.mu[idx], self.omega[np.ix_(idx, idx)], self.kind, tuple(self.labels[i] for i in idx)
        )

    def negated(self) -> "EllipticalModel":
        """Model of ``-Z`` (returns to losses); the shape matrix is unchanged."""
        return EllipticalModel(-self.mu, self.omega, self.kind, self.labels)

    def index_of(self, names: Sequence[str]) -> list[int]:
        pos = {n: i for i, n in enumerate(self.labels)}
        missing = [n for n in names if n not in pos]
        if missing:
            raise IndexOutOfRange(f"unknown variables {missing}")
        return [pos[n] for n in names]


def _check_indices(idx: Sequence[int], p: int, what: str) -> list[int]:
    out = [int(i) for i in idx]
    if not out:
        raise EmptySet(f"{what} is empty")
    bad = [i for i in out if i < 0 or i >= p]
    if bad:
        raise IndexOutOfRange(f"{what} has indices outside 0..{p - 1}: {bad}")
    if len(set(out)) != len(out):
        raise OverlappingSets(f"{what} has repeated indices")
    return out


@dataclass(frozen=True, eq=False)
class Partition:
    """Split of a model's variables into stressing ``X`` and stressed ``Y``.

    Blocks are taken in the given index order. ``omega_yx`` is the transpose
    of ``omega_xy`` by construction.
    """

    idx_x: tuple[int, ...]
    idx_y: tuple[int, ...]
    mu_x: NDArray[np.float64]
    mu_y: NDArray[np.float64]
    omega_xx: NDArray[np.float64]
    omega_xy: NDArray[np.float64]
    omega_yx: NDArray[np.float64]
    omega_yy: NDArray[np.float64]
    factor_xx: SPDFactor = field(repr=False, compare=False)
    labels_x: tuple[str, ...] = ()
    labels_y: tuple[str, ...] = ()

    @property
    def p_x(self) -> int:
        return len(self.idx_x)

    @property
    def p_y(self) -> int:
        return len(self.idx_y)

    def omega_joint(self) -> NDArray[np.float64]:
        """Joint shape of ``(X, Y)`` reassembled in partition order."""
        return np.block([[self.omega_xx, self.omega_xy], [self.omega_yx, self.omega_yy]])

    def regression(self) -> NDArray[np.float64]:
        """``Omega_YX Omega_XX^{-1}`` (p_Y x p_X), computed by a solve."""
        return self.factor_xx.solve(self.omega_xy).T


def build_partition(model: EllipticalModel, idx_x: Sequence[int], idx_y: Sequence[int]) -> Partition:
    """Extract the X/Y blocks of ``model`` in the given index order.

    Variables in neither set are marginalized out, i.e. dropped.
    """
    ix = _check_indices(idx_x, model.p, "idx_x")
    iy = _check_indices(idx_y, model.p, "idx_y")
    common = sorted(set(ix) & set(iy))
    if common:
        raise OverlappingSets(f"idx_x and idx_y share indices {common}")
    om = model.omega
    labels_x = tuple(model.labels[i] for i in ix)
    omega_xx = _frozen(om[np.ix_(ix, ix)], 2)
    omega_xy = _frozen(om[np.ix_(ix, iy)], 2)
    omega_yx = _frozen(omega_xy.T, 2)
    factor_xx = validate_spd(omega_xx, labels_x)
    return Partition(
        idx_x=tuple(ix),
        idx_y=tuple(iy),
        mu_x=_frozen(model.mu[ix], 1),
        mu_y=_frozen(model.mu[iy], 1),
        omega_xx=omega_xx,
        omega_xy=omega_xy,
        omega_yx=omega_yx,
        omega_yy=_frozen(om[np.ix_(iy, iy)], 2),
        factor_xx=factor_xx,
        labels_x=labels_x,
        labels_y=tuple(model.labels[i] for i in iy),
    )


@dataclass(frozen=True, eq=False)
class ConditionalModel:
    """Law of ``Y`` given ``X = x``.

    The conditional shape is ``shape_scale * omega_cond_base`` and the
    conditional covariance ``cov_scale * omega_cond_base``; the two scalars
    are kept apart from the x-independent Schur complement on purpose.
    """

    mu_cond: NDArray[np.float64]
    omega_cond_base: NDArray[np.float64]
    kind_cond: DistributionKind
    d2x: float
    shape_scale: float
    cov_scale: float
    p_x: int
    labels: tuple[str, ...] = ()

    @property
    def p_y(self) -> int:
        return self.mu_cond.shape[0]

    def shape(self) -> NDArray[np.float64]:
        return self.shape_scale * self.omega_cond_base

    def covariance(self) -> NDArray[np.float64]:
        return self.cov_scale * self.omega_cond_base

    def as_model(self) -> EllipticalModel:
        """The conditional law as a stand-alone :class:`EllipticalModel`."""
        return EllipticalModel(self.mu_cond, self.shape(), self.kind_cond, self.labels)
