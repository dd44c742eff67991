import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_model, random_spd
from ellipstress.errors import (
    DimensionMismatch,
    EmptySet,
    IndexOutOfRange,
    InvalidNu,
    NotPositiveDefinite,
    NotSymmetric,
    OverlappingSets,
)
from ellipstress.model import EllipticalModel, Normal, StudentT, build_partition, validate_spd
from oracles import det_cofactor


def test_logdet_identity():
    assert validate_spd(np.eye(3)).logdet == 0.0


def test_logdet_2x2():
    f = validate_spd([[2.0, 1.0], [1.0, 2.0]])
    assert f.logdet == pytest.approx(math.log(3.0), rel=1e-12)


def test_indefinite_reports_pivot():
    with pytest.raises(NotPositiveDefinite) as ei:
        validate_spd([[1.0, 2.0], [2.0, 1.0]])
    assert ei.value.pivot == 1


def test_asymmetric_rejected():
    with pytest.raises(NotSymmetric):
        validate_spd([[2.0, 1.0], [1.1, 2.0]])


def test_tiny_asymmetry_is_symmetrized():
    m = np.array([[2.0, 1.0], [1.0 + 1e-13, 2.0]])
    f = validate_spd(m)
    assert f.logdet == pytest.approx(math.log(3.0), rel=1e-10)


def test_near_singular_pivot_rejected():
    m = np.array([[1.0, 1.0], [1.0, 1.0 + 1e-14]])
    with pytest.raises(NotPositiveDefinite) as ei:
        validate_spd(m, labels=["a", "b"])
    assert ei.value.pivot == 1
    assert "b" in str(ei.value)


def test_solve_and_quad():
    m = np.array([[2.0, 1.0], [1.0, 2.0]])
    f = validate_spd(m)
    np.testing.assert_allclose(f.solve([1.0, 1.0]), [1 / 3, 1 / 3], rtol=1e-14)
    assert f.quad([1.0, 1.0]) == pytest.approx(2 / 3, rel=1e-14)


def test_logdet_matches_cofactor(rng):
    for p in range(1, 6):
        m = random_spd(rng, p)
        assert validate_spd(m).logdet == pytest.approx(math.log(det_cofactor(m)), rel=1e-8, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_logdet_block_diagonal_additive(p1, p2, seed):
    rng = np.random.default_rng(seed)
    a, b = random_spd(rng, p1), random_spd(rng, p2)
    z = np.zeros((p1, p2))
    m = np.block([[a, z], [z.T, b]])
    total = validate_spd(a).logdet + validate_spd(b).logdet
    assert validate_spd(m).logdet == pytest.approx(total, rel=1e-8, abs=1e-10)


def test_studentt_requires_nu_above_two():
    with pytest.raises(InvalidNu):
        StudentT(2.0)
    assert StudentT(6).cov_factor == 1.5


def test_model_validation():
    with pytest.raises(DimensionMismatch):
        EllipticalModel([0.0, 0.0], np.eye(3))
    with pytest.raises(NotPositiveDefinite):
        EllipticalModel([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(DimensionMismatch):
        EllipticalModel([0.0, 0.0], np.eye(2), Normal(), ("a",))
    m = EllipticalModel([0.0, 1.0], np.eye(2))
    assert m.labels == ("v0", "v1")
    assert not m.omega.flags.writeable
    # the factor is always available for accepted models
    assert m.factor.logdet == 0.0


def test_partition_blocks():
    om = np.array([[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]])
    m = EllipticalModel([1.0, 2.0, 3.0], om)
    part = build_partition(m, [0], [1, 2])
    assert part.omega_xx.tolist() == [[4.0]]
    np.testing.assert_array_equal(part.omega_yy, om[1:, 1:])
    np.testing.assert_array_equal(part.omega_yx, part.omega_xy.T)
    np.testing.assert_array_equal(part.mu_y, [2.0, 3.0])


def test_partition_respects_order():
    om = np.array([[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]])
    m = EllipticalModel([1.0, 2.0, 3.0], om)
    part = build_partition(m, [2, 0], [1])
    np.testing.assert_array_equal(part.omega_xx, [[2.0, 0.5], [0.5, 4.0]])
    np.testing.assert_array_equal(part.omega_xy, [[0.2], [1.0]])
    np.testing.assert_array_equal(part.mu_x, [3.0, 1.0])


def test_partition_errors():
    m = EllipticalModel(np.zeros(3), np.eye(3))
    with pytest.raises(OverlappingSets):
        build_partition(m, [0], [0])
    with pytest.raises(IndexOutOfRange):
        build_partition(m, [3], [0])
    with pytest.raises(EmptySet):
        build_partition(m, [], [0])


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 6), st.integers(0, 2**32 - 1))
def test_partition_reassembles_to_permuted_submatrix(p, seed):
    rng = np.random.default_rng(seed)
    m = random_model(rng, p)
    perm = rng.permutation(p)
    k = int(rng.integers(1, p - 1))
    ix, iy = list(perm[:k]), list(perm[k : p - 1 if p > 3 else p])
    part = build_partition(m, ix, iy)
    idx = ix + iy
    np.testing.assert_array_equal(part.omega_joint(), m.omega[np.ix_(idx, idx)])


def test_marginal_drops_variables(rng):
    m = random_model(rng, 5, StudentT(7))
    sub = m.marginal([3, 1])
    np.testing.assert_array_equal(sub.omega, m.omega[np.ix_([3, 1], [3, 1])])
    assert sub.kind == StudentT(7)
