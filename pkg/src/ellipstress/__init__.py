"""Stress testing and systemic-risk measures with conditional elliptical models."""

from .conditioning import (
    condition,
    conditional_covariance,
    conditional_location,
    conditional_shape_base,
    mahalanobis_sq,
)
from .estimation import (
    ReturnPanel,
    empirical_var_vector,
    fit_gaussian,
    fit_student_t,
    group_indices,
    log_returns,
)
from .measures import (
    MeasureMatrix,
    StressPolicy,
    StressScenario,
    StressSource,
    average_loss,
    axis_shrinkage,
    beta_factor,
    centroid_shift,
    covar_univariate,
    mahalanobis_impact_factor,
    measure_matrix,
    mutual_information,
    one_vs_rest,
    portfolio_conditional_variance,
    principal_rotation,
    total_variance_ratio,
    var_univariate,
)
from .model import (
    ConditionalModel,
    EllipticalModel,
    Normal,
    Partition,
    StudentT,
    build_partition,
    validate_spd,
)
from .sampler import kernel_condition, sample, sample_conditional

__version__ = "0.1.0"
