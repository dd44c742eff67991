"""Stress and systemic-risk measures over conditional elliptical models.

Sign convention: models are fitted on log-returns. The stress vectors used
here are *loss magnitudes* (positive numbers, loss = -return), and the
group-level drivers (:func:`measure_matrix`, :func:`evaluate_pair`) work on
the loss model ``-Z``, which has the same shape matrix and a negated
location. Average losses ``L`` therefore come out positive.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .conditioning import _vector, condition, conditional_location, conditional_shape_base, mahalanobis_sq
from .errors import (
    DegenerateTopEigenvalue,
    DimensionMismatch,
    EllipstressError,
    InputError,
    InternalConsistencyError,
    InvalidParameters,
    InvalidQuantile,
    NonPositiveScale,
)
from .model import (
    ConditionalModel,
    DistributionKind,
    EllipticalModel,
    Normal,
    Partition,
    StudentT,
    build_partition,
    validate_spd,
)

MI_CLAMP = 1e-10
EIG_DEGENERACY_TOL = 1e-8


# ---------------------------------------------------------------------------
# stress scenarios


class StressSource(str, enum.Enum):
    EMPIRICAL_VAR = "empirical-var"
    PARAMETRIC_VAR = "parametric-var"
    UNIFORM = "uniform"
    EXPLICIT = "explicit"


@dataclass(frozen=True, eq=False)
class StressScenario:
    """A resolved stress: loss magnitudes ``x`` for the stressing variables."""

    x: NDArray[np.float64]
    q: float | None
    source: StressSource

    def __post_init__(self):
        if self.source in (StressSource.EMPIRICAL_VAR, StressSource.PARAMETRIC_VAR):
            if self.q is None or not 0.0 < self.q < 1.0:
                raise InvalidQuantile(f"VaR stress needs q in (0, 1), got {self.q}")
        x = np.array(self.x, dtype=float, copy=True).reshape(-1)
        x.setflags(write=False)
        object.__setattr__(self, "x", x)


@dataclass(frozen=True, eq=False)
class StressPolicy:
    """Template that resolves a stress vector for any stressing index set.

    ``values`` holds one loss magnitude per model variable and is required
    for the empirical and explicit sources (the empirical VaR vector comes
    from :func:`ellipstress.estimation.empirical_var_vector`). ``c`` is the
    uniform stress level.
    """

    source: StressSource = StressSource.EMPIRICAL_VAR
    q: float = 0.95
    c: float = 1.0
    values: NDArray[np.float64] | None = None

    def __post_init__(self):
        object.__setattr__(self, "source", StressSource(self.source))
        if not 0.0 < self.q < 1.0:
            raise InvalidQuantile(f"q must lie in (0, 1), got {self.q}")
        if self.values is not None:
            v = np.array(self.values, dtype=float, copy=True).reshape(-1)
            v.setflags(write=False)
            object.__setattr__(self, "values", v)
        elif self.source in (StressSource.EMPIRICAL_VAR, StressSource.EXPLICIT):
            raise InputError(f"stress source {self.source.value} needs a per-variable values vector")

    def resolve(self, loss_model: EllipticalModel, idx_x: Sequence[int]) -> StressScenario:
        idx = list(idx_x)
        if self.source is StressSource.UNIFORM:
            x = np.full(len(idx), float(self.c))
        elif self.source is StressSource.PARAMETRIC_VAR:
            x = parametric_var_vector(loss_model, idx, self.q)
        else:
            if self.values.shape[0] != loss_model.p:
                raise DimensionMismatch(
                    f"stress values have length {self.values.shape[0]}, model has {loss_model.p} variables"
                )
            x = self.values[idx]
        return StressScenario(x, self.q, self.source)


def parametric_var_vector(loss_model: EllipticalModel, idx: Sequence[int], q: float) -> NDArray[np.float64]:
    """Per-variable parametric VaR of the loss marginals, floored at zero."""
    scale = np.sqrt(np.diag(loss_model.omega))
    v = [var_univariate(loss_model.mu[i], scale[i], loss_model.kind, q) for i in idx]
    return np.maximum(np.asarray(v, dtype=float), 0.0)


# ---------------------------------------------------------------------------
# univariate VaR / CoVaR


def var_univariate(mu: float, sigma: float, kind: DistributionKind, q: float) -> float:
    """``mu + ppf(q) * sigma`` with the standard quantile of ``kind``.

    ``sigma`` is the scale parameter (the square root of the shape, not the
    variance, for Student-t).
    """
    if not 0.0 < q < 1.0:
        raise InvalidQuantile(f"q must lie in (0, 1), got {q}")
    if not sigma > 0:
        raise NonPositiveScale(f"sigma must be > 0, got {sigma}")
    return float(mu) + kind.standard_ppf(q) * float(sigma)


def covar_univariate(model: EllipticalModel, q_x: float, q_y: float) -> float:
    """VaR of the second variable given the first sits at its own VaR.

    The conditional law uses the updated kind, so a Student-t model is
    evaluated with ``nu + 1`` degrees of freedom.
    """
    if model.p != 2:
        raise DimensionMismatch(f"covar_univariate needs a 2-variable model, got {model.p}")
    part = build_partition(model, [0], [1])
    x = var_univariate(model.mu[0], math.sqrt(model.omega[0, 0]), model.kind, q_x)
    cm = condition(model, part, [x])
    return conditional_var(cm, q_y)[0]


def conditional_var(cm: ConditionalModel, q: float) -> NDArray[np.float64]:
    """Per-component VaR of the conditional law at level ``q``."""
    scale = np.sqrt(cm.shape_scale * np.diag(cm.omega_cond_base))
    return np.array([var_univariate(m, s, cm.kind_cond, q) for m, s in zip(cm.mu_cond, scale)])


# ---------------------------------------------------------------------------
# centroid shift and average loss


def centroid_shift(part: Partition, x: ArrayLike) -> NDArray[np.float64]:
    """``mu_{Y|x} - mu_Y``, the multilinear regression of ``Y`` on ``X = x``."""
    return conditional_location(part, x) - part.mu_y


def average_loss(part: Partition, var_x: ArrayLike, form: str = "literal") -> float:
    """Mean over ``Y`` of ``Omega_YX Omega_XX^{-1} var_x``.

    ``form="literal"`` applies the regression operator to the VaR vector
    itself; ``form="deviation"`` uses ``var_x - mu_X`` instead, which makes
    it the mean of :func:`centroid_shift`.
    """
    v = _vector(var_x, part.p_x, "var_x")
    if form == "deviation":
        v = v - part.mu_x
    elif form != "literal":
        raise InvalidParameters(f"unknown average-loss form {form!r}")
    return float(np.mean(part.omega_yx @ part.factor_xx.solve(v)))


# ---------------------------------------------------------------------------
# x-independent measures


def mutual_information(part: Partition) -> float:
    """``0.5 * (log|Omega_XX| + log|Omega_YY| - log|Omega_ZZ|)`` in nats."""
    ld_x = part.factor_xx.logdet
    ld_y = validate_spd(part.omega_yy, part.labels_y).logdet
    ld_z = validate_spd(part.omega_joint(), part.labels_x + part.labels_y).logdet
    mi = 0.5 * (ld_x + ld_y - ld_z)
    if mi < 0.0:
        if mi < -MI_CLAMP:
            raise InternalConsistencyError(f"negative mutual information {mi:.3g}")
        mi = 0.0
    return mi


def _top_eig(m: NDArray[np.float64], what: str) -> tuple[float, NDArray[np.float64]]:
    w, v = np.linalg.eigh(m)
    if w.shape[0] > 1 and (w[-1] - w[-2]) <= EIG_DEGENERACY_TOL * abs(w[-1]):
        raise DegenerateTopEigenvalue(
            f"top two eigenvalues of the {what} matrix coincide ({w[-1]:.6g}, {w[-2]:.6g})"
        )
    return float(w[-1]), v[:, -1]


def principal_rotation(part: Partition) -> float:
    """Angle in degrees, in [0, 90], between the top eigenvectors of the
    unconditional and conditional shape matrices of ``Y``."""
    if part.p_y == 1:
        return 0.0
    _, u = _top_eig(part.omega_yy, "unconditional")
    _, uc = _top_eig(conditional_shape_base(part), "conditional")
    # half-angle form; acos loses about 1e-6 degrees near a zero angle
    if float(u @ uc) < 0:
        uc = -uc
    angle = 2.0 * math.atan2(float(np.linalg.norm(u - uc)), float(np.linalg.norm(u + uc)))
    return math.degrees(angle)


# ---------------------------------------------------------------------------
# x-dependent measures


def beta_factor(kind: DistributionKind, d2x: float, p_x: int) -> float:
    """1 for Normal; ``(nu + d2x) / (nu + p_x - 2)`` for Student-t."""
    if not d2x >= 0:
        raise InvalidParameters(f"d2x must be >= 0, got {d2x}")
    if p_x < 1:
        raise InvalidParameters(f"p_x must be >= 1, got {p_x}")
    if isinstance(kind, Normal):
        return 1.0
    den = kind.nu + (p_x - 2)
    if not den > 0:
        raise InvalidParameters(f"nu + p_x - 2 must be > 0, got {den}")
    return (kind.nu + d2x) / den


def _unconditional_kind(cm: ConditionalModel) -> DistributionKind:
    if isinstance(cm.kind_cond, StudentT):
        return StudentT(cm.kind_cond.nu - cm.p_x)
    return cm.kind_cond


def axis_shrinkage(part: Partition, cm: ConditionalModel | None = None) -> float:
    """Relative shrinkage ``(lam_Y - lam_{Y|X}) / lam_Y`` of the top eigenvalue.

    Without ``cm`` the shape matrices are compared (x-independent, the
    Normal-case number). With ``cm`` both sides are covariances: the
    conditional eigenvalue is scaled by ``cm.cov_scale`` and the
    unconditional one by the kind's ``nu/(nu-2)``.
    """
    lam_y = float(np.linalg.eigvalsh(part.omega_yy)[-1])
    lam_c = float(np.linalg.eigvalsh(conditional_shape_base(part))[-1])
    if cm is not None:
        lam_y *= _unconditional_kind(cm).cov_factor
        lam_c *= cm.cov_scale
    return (lam_y - lam_c) / lam_y


def portfolio_conditional_variance(
    part: Partition, w: ArrayLike, kind: DistributionKind, d2x: float
) -> float:
    """``beta * w^T (Omega_YY - Omega_YX Omega_XX^{-1} Omega_XY) w``."""
    w = _vector(w, part.p_y, "w")
    if not np.any(w):
        raise InvalidParameters("portfolio weights are all zero")
    v = float(w @ conditional_shape_base(part) @ w)
    return beta_factor(kind, d2x, part.p_x) * max(v, 0.0)


def mahalanobis_impact_factor(part: Partition, x_star: ArrayLike) -> float:
    """``d2(x_star) / p_X``."""
    return mahalanobis_sq(x_star, part.mu_x, part.factor_xx) / part.p_x


def total_variance_ratio(part: Partition, cm: ConditionalModel, reference: str = "covariance") -> float:
    """``|Sigma_{YY|x}| / |Sigma_YY|``, computed in log space.

    ``reference="covariance"`` divides by the unconditional covariance
    determinant, which for Student-t carries ``(nu/(nu-2))**p_Y``.
    ``reference="shape"`` divides by ``|Omega_YY|`` instead; that ratio
    crosses 1 at ``d2x = p_X - 2`` when the coupling vanishes.
    """
    p_y = part.p_y
    log_num = p_y * math.log(cm.cov_scale) + validate_spd(cm.omega_cond_base, part.labels_y).logdet
    log_den = validate_spd(part.omega_yy, part.labels_y).logdet
    if reference == "covariance":
        log_den += p_y * math.log(_unconditional_kind(cm).cov_factor)
    elif reference != "shape":
        raise InvalidParameters(f"unknown reference {reference!r}")
    return math.exp(log_num - log_den)


# ---------------------------------------------------------------------------
# group-level drivers

MEASURES = ("L", "MI", "THETA", "DELTA", "B", "TVR", "COVAR")
SYMMETRIC_MEASURES = frozenset({"MI"})


def evaluate_measure(
    measure: str,
    loss_model: EllipticalModel,
    part: Partition,
    scenario: StressScenario,
    eq_l_form: str = "literal",
) -> float:
    """One scalar measure for a partition of the loss model under ``scenario``."""
    m = measure.upper()
    if m == "L":
        return average_loss(part, scenario.x, eq_l_form)
    if m == "MI":
        return mutual_information(part)
    if m == "THETA":
        return principal_rotation(part)
    if m == "B":
        return mahalanobis_impact_factor(part, scenario.x)
    cm = condition(loss_model, part, scenario.x)
    if m == "DELTA":
        return axis_shrinkage(part, cm)
    if m == "TVR":
        return total_variance_ratio(part, cm)
    if m == "COVAR":
        q = scenario.q if scenario.q is not None else 0.95
        return float(np.mean(conditional_var(cm, q)))
    raise InvalidParameters(f"unknown measure {measure!r}; expected one of {MEASURES}")


@dataclass
class MeasureMatrix:
    """Group-by-group values of one measure; rows stress, columns are stressed.

    The diagonal is undefined and stored as NaN (emitted as null/empty).
    Cells that failed are NaN too and their error text is kept in
    ``metadata["errors"]`` under ``"row -> col"``.
    """

    measure_name: str
    row_labels: list[str]
    col_labels: list[str]
    values: NDArray[np.float64]
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def errors(self) -> dict[str, str]:
        return self.metadata.get("errors", {})

    def offdiag(self) -> NDArray[np.float64]:
        mask = ~np.eye(len(self.row_labels), dtype=bool)
        return self.values[mask]


def _run_cells(fn: Callable[[Any], float], cells: list, workers: int) -> list:
    def safe(c):
        try:
            return fn(c), None
        except EllipstressError as exc:
            return math.nan, f"{type(exc).__name__}: {exc}"

    if workers > 1 and len(cells) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(safe, cells))
    return [safe(c) for c in cells]


def _check_groups(groups: Mapping[str, Sequence[int]], p: int) -> dict[str, list[int]]:
    g = {k: [int(i) for i in v] for k, v in groups.items()}
    if len(g) < 2:
        raise InputError("need at least two groups")
    seen: set[int] = set()
    for name, idx in g.items():
        if not idx:
            raise InputError(f"group {name!r} is empty")
        if seen & set(idx):
            raise InputError(f"group {name!r} overlaps another group")
        seen |= set(idx)
    return g


def measure_matrix(
    model: EllipticalModel,
    groups: Mapping[str, Sequence[int]],
    measure: str,
    policy: StressPolicy,
    eq_l_form: str = "literal",
    workers: int = 1,
    dataset_id: str | None = None,
) -> MeasureMatrix:
    """Evaluate ``measure`` for every ordered (stressor, stressed) group pair.

    ``model`` is the return-space model; it is negated internally so that
    the stress is applied to losses. Symmetric measures (MI) are computed
    once per unordered pair and mirrored.
    """
    measure = measure.upper()
    if measure not in MEASURES:
        raise InvalidParameters(f"unknown measure {measure!r}; expected one of {MEASURES}")
    g = _check_groups(groups, model.p)
    names = list(g)
    loss = model.negated()
    n = len(names)
    symmetric = measure in SYMMETRIC_MEASURES
    cells = [(i, j) for i in range(n) for j in range(n) if i != j and (not symmetric or i < j)]

    def cell(ij):
        i, j = ij
        part = build_partition(loss, g[names[i]], g[names[j]])
        scen = policy.resolve(loss, part.idx_x)
        return evaluate_measure(measure, loss, part, scen, eq_l_form)

    values = np.full((n, n), math.nan)
    errors: dict[str, str] = {}
    for (i, j), (v, err) in zip(cells, _run_cells(cell, cells, workers)):
        values[i, j] = v
        if symmetric:
            values[j, i] = v
        if err is not None:
            errors[f"{names[i]} -> {names[j]}"] = err
            if symmetric:
                errors[f"{names[j]} -> {names[i]}"] = err
    meta: dict[str, Any] = {
        "q": policy.q,
        "stress_source": policy.source.value,
        "distribution": model.kind.name,
        "nu": getattr(model.kind, "nu", None),
        "eq_l_form": eq_l_form,
        "dataset": dataset_id,
        "errors": errors,
    }
    return MeasureMatrix(measure, names, list(names), values, meta)


@dataclass
class OneVsRest:
    """Each group against the rest of the system, in both directions."""

    measure_name: str
    labels: list[str]
    group_to_rest: NDArray[np.float64]
    rest_to_group: NDArray[np.float64]
    errors: dict[str, str] = field(default_factory=dict)


def one_vs_rest(
    model: EllipticalModel,
    groups: Mapping[str, Sequence[int]],
    measure: str,
    policy: StressPolicy,
    eq_l_form: str = "literal",
    workers: int = 1,
) -> OneVsRest:
    measure = measure.upper()
    g = _check_groups(groups, model.p)
    names = list(g)
    loss = model.negated()
    everything = [i for name in names for i in g[name]]
    cells = []
    for name in names:
        rest = [i for i in everything if i not in set(g[name])]
        cells.append((g[name], rest))
        cells.append((rest, g[name]))

    def cell(xy):
        part = build_partition(loss, *xy)
        scen = policy.resolve(loss, part.idx_x)
        return evaluate_measure(measure, loss, part, scen, eq_l_form)

    res = _run_cells(cell, cells, workers)
    out_v = np.array([v for v, _ in res[0::2]])
    in_v = np.array([v for v, _ in res[1::2]])
    errors = {}
    for k, name in enumerate(names):
        if res[2 * k][1]:
            errors[f"{name} -> rest"] = res[2 * k][1]
        if res[2 * k + 1][1]:
            errors[f"rest -> {name}"] = res[2 * k + 1][1]
    return OneVsRest(measure, names, out_v, in_v, errors)


def cross_measure_correlation(a: MeasureMatrix, b: MeasureMatrix) -> float | None:
    """Pearson correlation of two matrices over off-diagonal cells both define."""
    x, y = a.offdiag(), b.offdiag()
    ok = np.isfinite(x) & np.isfinite(y)
    if ok.sum() < 3 or np.std(x[ok]) == 0 or np.std(y[ok]) == 0:
        return None
    return float(np.corrcoef(x[ok], y[ok])[0, 1])


@dataclass
class PairReport:
    """Every measure for one stressor/stressed pair (loss space)."""

    stressor: list[str]
    stressed: list[str]
    stress: NDArray[np.float64]
    d2x: float
    shift: NDArray[np.float64]
    values: dict[str, float | None]
    errors: dict[str, str]


def evaluate_pair(
    model: EllipticalModel,
    idx_x: Sequence[int],
    idx_y: Sequence[int],
    policy: StressPolicy,
    eq_l_form: str = "literal",
) -> PairReport:
    """All measures for one pair; a failing measure does not abort the others."""
    loss = model.negated()
    part = build_partition(loss, idx_x, idx_y)
    scen = policy.resolve(loss, part.idx_x)
    cm = condition(loss, part, scen.x)
    values: dict[str, float | None] = {}
    errors: dict[str, str] = {}
    singles: dict[str, Callable[[], float]] = {
        "L": lambda: average_loss(part, scen.x, eq_l_form),
        "MI": lambda: mutual_information(part),
        "THETA": lambda: principal_rotation(part),
        "DELTA": lambda: axis_shrinkage(part, cm),
        "BETA": lambda: beta_factor(loss.kind, cm.d2x, part.p_x),
        "B": lambda: mahalanobis_impact_factor(part, scen.x),
        "TVR": lambda: total_variance_ratio(part, cm),
        "COVAR": lambda: float(np.mean(conditional_var(cm, policy.q))),
    }
    for key, fn in singles.items():
        try:
            values[key] = fn()
        except EllipstressError as exc:
            values[key] = None
            errors[key] = f"{type(exc).__name__}: {exc}"
    return PairReport(
        stressor=list(part.labels_x),
        stressed=list(part.labels_y),
        stress=scen.x,
        d2x=cm.d2x,
        shift=conditional_location(part, scen.x) - part.mu_y,
        values=values,
        errors=errors,
    )
