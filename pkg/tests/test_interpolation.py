import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sbpsub.interpolation import (InterpolationError, accuracy_report, apply_boundary_transform,
                                  build_base_pair, build_interface_pair, interior_rows)

RATIOS = [(1, 1), (1, 2), (2, 3), (2, 5), (1, 5), (1, 10)]


def test_identity_ratio():
    pair = build_base_pair(7, 7, (1, 1))
    assert np.array_equal(pair.T_c2f, np.eye(7))
    assert np.allclose(pair.T_f2c, np.eye(7), rtol=0, atol=1e-15)
    ns = apply_boundary_transform(pair)
    assert np.allclose(ns.T_W, pair.B_c, rtol=0, atol=1e-15)


def test_boundary_transform_diagonal():
    ns = build_interface_pair(6, (1, 2))
    bc = np.diag(ns.base.B_c)
    assert bc[0] == bc[-1] == 0.5
    assert np.all(bc[1:-1] == 1.0)


def test_ratio_one_to_two_rows():
    pair = build_base_pair(9, 17, (1, 2))
    T = pair.T_c2f
    for i in range(0, 17, 2):
        expect = np.zeros(9)
        expect[i // 2] = 1.0
        assert np.allclose(T[i], expect, rtol=0, atol=1e-14)
    for i in range(3, 14, 2):
        expect = np.zeros(9)
        expect[[i // 2, i // 2 + 1]] = 0.5
        assert np.allclose(T[i], expect, rtol=0, atol=1e-14)


def test_aligned_compatibility_two_to_three():
    pair = build_base_pair(41, 61, (2, 3))
    assert pair.aligned_residual() <= 1e-12


@pytest.mark.parametrize("ratio", RATIOS)
def test_constants_and_linears(ratio):
    pair = build_interface_pair(21 if ratio[0] == 1 else 41, ratio, h_coarse=0.05).base
    rep = accuracy_report(pair)
    assert rep["constant"]["interior"] <= 1e-13 and rep["constant"]["closure"] <= 1e-13
    assert rep["linear"]["interior"] <= 1e-12
    assert np.allclose(pair.T_f2c.sum(axis=1), 1.0, rtol=0, atol=1e-12)


def test_quadratic_interior_second_order():
    errs = [accuracy_report(build_interface_pair(n, (1, 5)).base)["quadratic"]["interior"]
            for n in (11, 21, 41)]
    rates = [errs[k] / errs[k + 1] for k in range(2)]
    assert all(3.5 <= r <= 4.5 for r in rates), rates


def test_deterministic():
    a = build_interface_pair(41, (2, 5))
    b = build_interface_pair(41, (2, 5))
    assert np.array_equal(a.T_W, b.T_W) and np.array_equal(a.T_hat_W, b.T_hat_W)


def test_geometry_mismatch_rejected():
    with pytest.raises(InterpolationError, match="mismatch"):
        build_base_pair(5, 10, (1, 2))
    with pytest.raises(InterpolationError, match="tile"):
        build_base_pair(4, 5, (2, 3))


def test_infeasible_support_reports_minimum():
    with pytest.raises(InterpolationError, match="coarse nodes"):
        build_base_pair(3, 7, (2, 5), width=2)


def test_interior_rows_stay_away_from_ends():
    pair = build_interface_pair(11, (1, 5)).base
    rows = interior_rows(pair)
    x = rows / 5
    assert x.min() >= 2 and x.max() <= 8


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(RATIOS), st.integers(2, 30), st.floats(1e-3, 1.0))
def test_nonsplit_compatibility_property(ratio, k, h):
    n = ratio[0] * k + 1
    ns = build_interface_pair(n, ratio, h)
    assert ns.compatibility_residual() <= 1e-12
    assert ns.base.aligned_residual() <= 1e-12
    T = ns.T_hat_W
    assert np.allclose(T.sum(axis=1), 1.0, rtol=0, atol=1e-12)
