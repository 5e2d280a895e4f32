import numpy as np
import pytest
import scipy.sparse as sp

from sbpsub.analysis import energy_rates, skew_residual
from sbpsub.coupling import (CouplingError, SATConfig, assemble_embedded_sats, assemble_global_system,
                             assemble_outer_sats, build_embedded_block, build_extraction_ops,
                             default_penalties, zero_penalties)
from sbpsub.operators import MaterialField, assemble_outer_2d
from sbpsub.topology import (SIDES, EmbeddedRegionSpec, StaggeredLayout, build_indicator_masks,
                             interface_index_sets)

from conftest import small_cavity


def _cavity_parts(ratio=(1, 5)):
    lay = StaggeredLayout(120, 120, 0.05, 0.05)
    masks = build_indicator_masks(lay, [EmbeddedRegionSpec((2, 4, 2, 4), ratio)])
    return lay, masks


def test_extraction_selection_algebra():
    lay, masks = _cavity_parts()
    itf = interface_index_sets(lay, masks, masks.regions[0])
    ext = build_extraction_ops(lay, itf)
    x, y = lay.coords("ez")
    for s in SIDES:
        L = ext[s].L_ez
        assert L.shape == (41, lay.n_ez)
        assert np.all(np.diff(L.indptr) == 1) and np.all(L.data == 1.0)
        LtL = (L.T @ L).tocsr()
        assert abs(LtL @ LtL - LtL).max() == 0
        assert abs(L @ L.T - sp.identity(41)).max() == 0
        tang = y if s in "WE" else x
        assert np.all(np.diff(L @ tang) > 0)


def test_default_penalties():
    cfg = default_penalties()
    vals = [v for tab in (cfg.outer, cfg.embedded) for pair in tab.values() for v in pair]
    assert len(vals) == 16 and all(v == -0.5 for v in vals)
    assert all(1 + se + sh == 0 for se, sh in cfg.outer.values())
    assert cfg.energy_neutral()


def test_custom_penalties_accepted_and_checked():
    cfg = SATConfig({s: (-1.0, 0.0) for s in SIDES}, {s: (0.0, -1.0) for s in SIDES})
    assert cfg.energy_neutral()
    with pytest.raises(CouplingError, match="side W"):
        SATConfig({s: (-1.0, -0.5) for s in SIDES}, {s: (-0.5, -0.5) for s in SIDES})


def _block(ratio=(1, 2)):
    lay = StaggeredLayout(12, 12, 0.1, 0.1)
    masks = build_indicator_masks(lay, [EmbeddedRegionSpec((0.4, 0.8, 0.4, 0.8), ratio)])
    outer = assemble_outer_2d(masks)
    return outer, build_embedded_block(lay, masks, masks.regions[0])


@pytest.mark.parametrize("ratio", [(1, 2), (2, 3), (1, 5)])
def test_matched_fields_give_zero_sat(ratio):
    outer, blk = _block(ratio)
    lay, flay = outer.layout, blk.ops.ops.layout
    ones_h = {"outer": np.ones(lay.n_hy + lay.n_hx), "embedded": np.ones(flay.n_hy + flay.n_hx)}
    ones_e = {"outer": np.ones(lay.n_ez), "embedded": np.ones(flay.n_ez)}
    cfg = default_penalties()
    for t in assemble_embedded_sats(blk, outer, cfg) + assemble_outer_sats(blk, outer, cfg):
        other = "outer" if t.owner == "embedded" else "embedded"
        src = ones_h if t.target == "E" else ones_e
        r = t.self_op @ src[t.owner] + t.cross_op @ src[other]
        scale = abs(t.self_op).max()
        assert np.abs(r).max() <= 1e-12 * scale * max(1, r.size), (t.side, t.target, t.owner)


def test_zero_penalties_give_zero_blocks():
    outer, blk = _block()
    for t in assemble_embedded_sats(blk, outer, zero_penalties()) + assemble_outer_sats(blk, outer, zero_penalties()):
        assert t.self_op.count_nonzero() == 0 and t.cross_op.count_nonzero() == 0


def test_sat_block_counts():
    outer, blk = _block()
    sats = assemble_embedded_sats(blk, outer, default_penalties())
    assert sum(t.target == "E" for t in sats) == 4
    assert sum(t.target == "H" for t in sats) == 4
    lay = StaggeredLayout(24, 12, 0.1, 0.1)
    masks = build_indicator_masks(lay, [EmbeddedRegionSpec((0.3, 0.8, 0.3, 0.8), (1, 2)),
                                        EmbeddedRegionSpec((1.4, 2.0, 0.4, 0.8), (1, 2))])
    outer = assemble_outer_2d(masks)
    n_outer_e = 0
    for r in masks.regions:
        blk = build_embedded_block(lay, masks, r)
        n_outer_e += sum(t.target == "E" for t in assemble_outer_sats(blk, outer, default_penalties()))
    assert n_outer_e == 8


def test_outer_and_embedded_brackets_have_opposite_sign():
    """Raising the fine H trace raises one continuity bracket and lowers the other."""
    outer, blk = _block()
    cfg = default_penalties()
    emb = {t.side: t for t in assemble_embedded_sats(blk, outer, cfg) if t.target == "E"}
    out = {t.side: t for t in assemble_outer_sats(blk, outer, cfg) if t.target == "E"}
    flay = blk.ops.ops.layout
    dh = np.zeros(flay.n_hy + flay.n_hx)
    dh[:flay.n_hy] = 1.0
    for s in ("W", "E"):
        kappa = blk.interfaces[s].kappa
        se_hat = cfg.embedded[s][0]
        se = cfg.outer[s][0]
        # strip the penalty coefficients to recover the bracket responses
        b_emb = blk.ops.e_ez[s] @ (emb[s].self_op @ dh) / (-kappa * se_hat)
        b_out = blk.extraction[s].L_ez @ (out[s].cross_op @ dh) / (kappa * se)
        assert np.all(b_emb > 0) and np.all(b_out < 0)


def test_no_region_reduces_to_single_domain():
    sysm = small_cavity(None)
    lay = StaggeredLayout(12, 12, 0.1, 0.1)
    ops = assemble_outer_2d(build_indicator_masks(lay, []))
    AE = sp.hstack([ops.Dxm, -ops.Dym]).tocsr()
    wall = ~sysm.active_E
    AE = sp.diags((~wall).astype(float)) @ AE
    assert abs(sysm.A_E - AE).max() == 0
    assert sysm.sat_count == ()


def test_masked_rows_and_columns_are_zero(cavity_1_2):
    s = cavity_1_2
    dead_e = ~s.active_E
    dead_h = ~s.active_H
    assert s.A_E[dead_e].nnz == 0 and s.A_E[:, dead_h].nnz == 0
    assert s.A_H[dead_h].nnz == 0 and s.A_H[:, dead_e].nnz == 0
    assert s.sat_count == (4,)


@pytest.mark.parametrize("ratio", [(1, 2), (2, 3), (1, 5), (1, 1)])
def test_lossless_skew_symmetry(ratio):
    s = small_cavity(ratio, n=14, lo=4, hi=10) if ratio == (2, 3) else small_cavity(ratio)
    assert skew_residual(s)["skew_rel"] <= 1e-10


def test_alternative_neutral_penalties_conserve_energy():
    cfg = SATConfig({s: (-1.0, 0.0) for s in SIDES}, {s: (0.0, -1.0) for s in SIDES})
    assert skew_residual(small_cavity((1, 2), config=cfg))["skew_rel"] <= 1e-10


def test_penalties_without_cross_condition_break_energy():
    cfg = SATConfig({s: (-1.0, 0.0) for s in SIDES}, {s: (-1.0, 0.0) for s in SIDES})
    assert not cfg.energy_neutral()
    assert skew_residual(small_cavity((1, 2), config=cfg))["skew_rel"] > 1e-3


def test_lossy_system_dissipates():
    lay = StaggeredLayout(12, 12, 0.1, 0.1)
    masks = build_indicator_masks(lay, [EmbeddedRegionSpec((0.4, 0.8, 0.4, 0.8), (1, 2))])
    m = MaterialField.vacuum(lay)
    sig = np.full(lay.n_ez, 0.01)
    outer_m = MaterialField(m.eps_ez, m.mu_hy, m.mu_hx, sig)
    flay = masks.regions[0].fine_layout
    fm = MaterialField.vacuum(flay)
    fine_m = MaterialField(fm.eps_ez * 4, fm.mu_hy, fm.mu_hx, np.full(flay.n_ez, 0.05))
    s = assemble_global_system(masks, outer_m, [fine_m])
    assert skew_residual(s)["skew_rel"] <= 1e-10
    rates = energy_rates(s, n_samples=32, with_loss=True)
    assert np.all(rates <= 0)
    assert np.all(s.loss[s.active_E] > 0)
