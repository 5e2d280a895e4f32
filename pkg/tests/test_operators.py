import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from sbpsub.operators import (EPS0, MU0, MaterialField, assemble_outer_2d, blocked_omega_ops,
                              build_embedded_2d, build_modified_ops_1d, build_reference_ops_1d,
                              kron_blend_y, scale_by_materials, verify_sbp_identity)
from sbpsub.topology import EmbeddedRegionSpec, GeometryError, StaggeredLayout, build_indicator_masks


def test_reference_norm_weights():
    ops = build_reference_ops_1d(4, 1.0)
    assert np.array_equal(ops.P_minus, [0.5, 1, 1, 1, 0.5])
    assert np.array_equal(ops.P_plus, np.ones(4))


def test_reference_dplus_scaling():
    ops = build_reference_ops_1d(3, 0.5)
    assert np.array_equal(ops.D_plus.toarray()[0], [-2, 2, 0, 0])


def test_reference_rejects_single_cell():
    with pytest.raises(GeometryError):
        build_reference_ops_1d(1, 1.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 200), st.floats(1e-3, 10.0))
def test_reference_constant_annihilation_and_sbp(n, h):
    ops = build_reference_ops_1d(n, h)
    assert np.max(np.abs(ops.D_minus @ np.ones(n))) == 0.0
    assert np.max(np.abs(ops.D_plus @ np.ones(n + 1))) == 0.0
    assert verify_sbp_identity(ops)["interior_residual"] <= 1e-13
    B = ops.B.toarray()
    assert np.allclose(B[0, :2], [-1.5, 0.5]) and np.allclose(B[-1, -2:], [-0.5, 1.5])


def test_modified_without_holes_is_reference():
    mod = build_modified_ops_1d(8, 1.0, [])
    ref = build_reference_ops_1d(8, 1.0)
    assert (mod.D_minus_prime != ref.D_minus).nnz == 0


def test_modified_rows_p_and_q():
    p, q = 4, 8
    mod = build_modified_ops_1d(12, 1.0, [(p, q)])
    D = mod.D_minus_prime.toarray()
    assert np.array_equal(D[p, p - 2:p + 1], [-0.5, -0.5, 1.0])
    assert np.count_nonzero(D[p]) == 3
    assert np.array_equal(D[q, q - 1:q + 2], [-1.0, 0.5, 0.5])
    B = mod.B_prime.toarray()
    assert np.array_equal(B[p, p - 2:p], [-0.5, 1.5])
    assert np.array_equal(B[0, :2], [-1.5, 0.5])
    assert np.array_equal(B[q, q:q + 2], [-1.5, 0.5])
    Pp = mod.P_plus_prime
    assert Pp[p - 1] == 2.0 and Pp[q] == 2.0
    assert np.count_nonzero(Pp != 1.0) == 2


def test_modified_line_relation_to_closed_form():
    n, h, p, q = 12, 0.5, 4, 8
    mod = build_modified_ops_1d(n, h, [(p, q)])
    Q = mod.line.Q.toarray()
    assert np.allclose(Q, mod.face_weight[:, None] * mod.D_minus_prime.toarray(), atol=1e-15)
    res = verify_sbp_identity(mod, boundary_rows=(p, q))
    assert res["interior_residual"] <= 1e-13
    assert res["rows_checked"] > 0


def test_blocked_ops_middle_third():
    b = blocked_omega_ops(9, 1.0, [(3, 6)])
    ref = build_reference_ops_1d(3, 1.0)
    D = b.D_minus.toarray()
    assert np.array_equal(D[0:4, 0:3], ref.D_minus.toarray())
    assert np.array_equal(D[6:10, 6:9], ref.D_minus.toarray())
    assert not D[4:6].any()
    assert np.array_equal(b.P_minus[4:6], [0, 0])
    assert len(b.segments) == 2
    assert len(blocked_omega_ops(15, 1.0, [(3, 6), (9, 12)]).segments) == 3


def test_blocked_ops_no_hole_is_reference():
    b = blocked_omega_ops(7, 0.3, [])
    ref = build_reference_ops_1d(7, 0.3)
    assert (b.D_minus != ref.D_minus).nnz == 0
    assert np.array_equal(b.P_minus, ref.P_minus)


def test_blocked_ops_rejects_short_segment():
    with pytest.raises(GeometryError):
        blocked_omega_ops(9, 1.0, [(1, 6)])


def test_overlapping_holes_rejected():
    with pytest.raises(GeometryError):
        build_modified_ops_1d(20, 1.0, [(3, 8), (6, 12)])


def test_scale_by_materials():
    ref = build_reference_ops_1d(5, 1.0)
    vac = scale_by_materials(ref, 1.0, 1.0)
    assert np.allclose(vac.D_minus.toarray(), ref.D_minus.toarray() / EPS0, rtol=1e-15)
    assert np.allclose(vac.D_plus.toarray(), ref.D_plus.toarray() / MU0, rtol=1e-15)
    eps = np.ones(6)
    eps[2] = 4.0
    s = scale_by_materials(ref, eps, 1.0)
    assert np.allclose(s.D_minus.toarray()[2], ref.D_minus.toarray()[2] / (4 * EPS0), rtol=1e-15)
    assert np.all(s.P_minus > 0)
    with pytest.raises(ValueError):
        scale_by_materials(ref, -1.0, 1.0)


def test_material_field_bounds():
    lay = StaggeredLayout(2, 2, 1.0, 1.0)
    m = MaterialField.vacuum(lay)
    with pytest.raises(ValueError):
        MaterialField(m.eps_ez * 1e-7, m.mu_hy, m.mu_hx, m.sigma_ez)
    with pytest.raises(ValueError):
        MaterialField(m.eps_ez, m.mu_hy, m.mu_hx, m.sigma_ez - 1.0)


def test_outer_assembly_without_hole_is_kronecker():
    lay = StaggeredLayout(5, 7, 0.2, 0.1)
    ops = assemble_outer_2d(build_indicator_masks(lay, []))
    rx = build_reference_ops_1d(5, 0.2)
    ry = build_reference_ops_1d(7, 0.1)
    Qx = sp.kron(sp.diags(rx.P_minus) @ rx.D_minus, sp.diags(ry.P_minus))
    Qy = sp.kron(sp.diags(rx.P_minus), sp.diags(ry.P_minus) @ ry.D_minus)
    assert abs(ops.Qx - Qx).max() <= 1e-15
    assert abs(ops.Qy - Qy).max() <= 1e-15
    assert np.allclose(ops.G_ez, np.kron(rx.P_minus, ry.P_minus), rtol=1e-15)
    assert np.allclose(ops.G_hy, np.kron(rx.P_plus, ry.P_minus), rtol=1e-15)
    assert np.allclose(ops.G_hx, np.kron(rx.P_minus, ry.P_plus), rtol=1e-15)


def _holed_ops():
    lay = StaggeredLayout(120, 120, 0.05, 0.05)
    masks = build_indicator_masks(lay, [EmbeddedRegionSpec((2, 4, 2, 4), (1, 5))])
    return masks, assemble_outer_2d(masks)


def test_outer_assembly_with_hole():
    masks, ops = _holed_ops()
    hole = masks.ez_hole > 0
    assert ops.Dym[hole].nnz == 0 and ops.Dxm[hole].nnz == 0
    assert np.all(ops.P_ez[hole] == 0)
    assert np.all(ops.P_ez[~hole] > 0)
    act = ~hole
    for D, n in ((ops.Dym, ops.layout.n_hx), (ops.Dxm, ops.layout.n_hy)):
        rows = np.abs(D @ np.ones(n))[act]
        assert rows.max() <= 1e-9 * abs(D).max()


def test_outer_kronecker_blend_matches_line_assembly():
    masks, ops = _holed_ops()
    assert abs(kron_blend_y(masks) - ops.Qy).max() <= 1e-15


def test_outer_corner_weight_is_three_quarters():
    masks, ops = _holed_ops()
    lay = ops.layout
    k = lay.ez_index(40, 40)
    assert ops.G_ez[k] == pytest.approx(0.75 * lay.dx * lay.dy, rel=1e-14)


def test_embedded_block_norms_and_traces():
    h = 0.01
    lay = StaggeredLayout(2, 2, h, h)
    emb = build_embedded_2d(lay)
    assert emb.ops.P_ez[lay.ez_index(0, 0)] == pytest.approx(h * h / 4 * EPS0, rel=1e-15)
    for D, n in ((emb.ops.Dxm, lay.n_hy), (emb.ops.Dym, lay.n_hx), (emb.ops.Dxp, lay.n_ez)):
        assert np.abs(D @ np.ones(n)).max() <= 1e-12 * abs(D).max()
    lay = StaggeredLayout(6, 4, h, h)
    emb = build_embedded_2d(lay)
    xh, _ = lay.coords("hy")
    lin = 3.0 * xh + 1.0
    assert np.allclose(emb.proj_h["W"] @ lin, 1.0, rtol=1e-13)
    assert np.allclose(emb.proj_h["E"] @ lin, 3.0 * 6 * h + 1.0, rtol=1e-13)
    with pytest.raises(GeometryError):
        build_embedded_2d(StaggeredLayout(1, 4, h, h))
