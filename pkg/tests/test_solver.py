import numpy as np
import pytest

from sbpsub.operators import C0, MaterialField
from sbpsub.coupling import assemble_global_system
from sbpsub.solver import (FieldState, InstabilityError, ProbeSpec, SourceSpec, Stepper, TimeConfig,
                           cfl_time_step, discrete_energy, gaussian_tau_for_cutoff, resolve_node, run,
                           source_value, spectral_time_step, step)
from sbpsub.topology import EmbeddedRegionSpec, StaggeredLayout, build_indicator_masks

from conftest import small_cavity

H = 0.1


def _pulse(point=(0.25, 0.55), tau=None, **kw):
    tau = tau or 2.0 * H / C0
    return SourceSpec("gaussian", 1.0, tau, 4.0 * tau, point=point, **kw)


def test_cfl_uniform_vacuum():
    s = small_cavity(None)
    assert cfl_time_step(s, 1.0) == pytest.approx(H / (C0 * np.sqrt(2.0)), rel=1e-14)


def test_cfl_scales_with_finest_mesh():
    coarse = cfl_time_step(small_cavity(None), 1.0)
    fine = cfl_time_step(small_cavity((1, 5)), 1.0)
    assert fine == pytest.approx(coarse / 5, rel=1e-14)


def test_cfl_slow_medium_in_fine_block():
    lay = StaggeredLayout(12, 12, H, H)
    masks = build_indicator_masks(lay, [EmbeddedRegionSpec((0.4, 0.8, 0.4, 0.8), (1, 2))])
    flay = masks.regions[0].fine_layout
    vac = MaterialField.vacuum(flay)
    dense = MaterialField(4.0 * vac.eps_ez, vac.mu_hy, vac.mu_hx, vac.sigma_ez)
    base = cfl_time_step(assemble_global_system(masks), 1.0)
    slow = cfl_time_step(assemble_global_system(masks, fine_materials=[dense]), 1.0)
    assert slow == pytest.approx(2.0 * base, rel=1e-14)


@pytest.mark.parametrize("ratio", [(1, 2), (1, 5)])
def test_cfl_below_spectral_limit(ratio):
    s = small_cavity(ratio)
    assert cfl_time_step(s, 0.99) < spectral_time_step(s)


def test_source_values():
    spec = _pulse()
    assert source_value(spec, spec.t0) == 1.0
    assert source_value(spec, spec.t0 + 50 * spec.tau) == 0.0
    assert source_value(spec, -50 * spec.tau) == 0.0
    head = SourceSpec("gaussian", 1.0, 0.48e-9, 1.77e-9, point=(0, 0))
    t = 1.77e-9 + 0.48e-9
    assert source_value(head, t) == pytest.approx(np.exp(-1.0), rel=1e-15)
    mod = SourceSpec("modulated_gaussian", 2.0, 1e-9, 4e-9, carrier=1e9, point=(0, 0))
    assert source_value(mod, 4e-9) == 0.0
    assert source_value(mod, 4.25e-9) == pytest.approx(2.0 * np.exp(-0.0625), rel=1e-12)


def test_source_validation():
    with pytest.raises(ValueError):
        SourceSpec("gaussian", 1.0, 0.0, 0.0, point=(0, 0))
    with pytest.raises(ValueError):
        SourceSpec("gaussian", 1.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        SourceSpec("square", 1.0, 1.0, 0.0, point=(0, 0))
    with pytest.raises(ValueError):
        SourceSpec("gaussian", 1.0, 1.0, 0.0, point=(0, 0), mode="voltage")


def test_tau_for_cutoff_level():
    f = 150e6
    tau = gaussian_tau_for_cutoff(f)
    assert np.exp(-(np.pi * f * tau) ** 2) == pytest.approx(0.1, rel=1e-12)


def test_zero_state_is_fixed_point(cavity_1_2):
    st = FieldState.zeros(cavity_1_2)
    step(st, cavity_1_2, [], 1e-12)
    assert not st.E.any() and not st.H.any()
    assert st.step == 1


def test_discrete_energy_quadratic(cavity_1_2):
    s = cavity_1_2
    rng = np.random.default_rng(1)
    E = rng.standard_normal(s.n_E) * s.active_E
    Hf = rng.standard_normal(s.n_H) * s.active_H
    assert discrete_energy(0 * E, 0 * Hf, s) == 0.0
    assert discrete_energy(2 * E, 2 * Hf, s) == pytest.approx(4 * discrete_energy(E, Hf, s), rel=1e-14)


def test_probe_at_source_sees_single_increment(cavity_1_2):
    src = _pulse()
    ref = resolve_node(cavity_1_2, src.point)
    rec = run(cavity_1_2, [src], [ProbeSpec("p", point=ref.position)], TimeConfig(0.9, 2))
    dt = rec.meta["dt_s"]
    assert rec.probes["p_Ez"][0] == 0.0
    assert rec.probes["p_Ez"][1] == source_value(src, 0.5 * dt)


def test_current_source_increment_is_mesh_independent():
    incs = []
    for ratio in ((1, 2), (1, 5)):
        s = small_cavity(ratio)
        src = _pulse(point=(0.6, 0.6), mode="current")
        dt = cfl_time_step(s, 0.9)
        st = FieldState.zeros(s)
        Stepper(s, dt, [src]).step(st)
        k = resolve_node(s, src.point).index
        incs.append(st.E[k] * s.P_E[k] / dt / source_value(src, 0.5 * dt))
    assert incs == pytest.approx([1.0, 1.0], rel=1e-12)


def test_lossless_energy_drift_and_masked_dofs(cavity_2_3):
    s = cavity_2_3
    rec = run(s, [_pulse()], [], TimeConfig(0.99, 10_000, 1))
    e = rec.energy
    settled = e[200:]
    assert np.max(np.abs(settled - settled[0])) / settled[0] <= 1e-8
    assert rec.meta["masked_dof_max_abs"] == 0.0


def test_lossy_energy_non_increasing():
    lay = StaggeredLayout(12, 12, H, H)
    masks = build_indicator_masks(lay, [EmbeddedRegionSpec((0.4, 0.8, 0.4, 0.8), (1, 2))])
    vac = MaterialField.vacuum(lay)
    lossy = MaterialField(vac.eps_ez, vac.mu_hy, vac.mu_hx, np.full(lay.n_ez, 1e-3))
    s = assemble_global_system(masks, lossy)
    rec = run(s, [_pulse()], [], TimeConfig(0.99, 3000, 1))
    e = rec.energy[200:]
    assert np.all(np.diff(e) <= 1e-15 * e[0])
    assert e[-1] < e[0]


def test_run_is_deterministic(cavity_1_2):
    args = (cavity_1_2, [_pulse()], [ProbeSpec("p", point=(0.9, 0.3), components=("Ez", "Hy"))],
            TimeConfig(0.99, 500, 3))
    a, b = run(*args), run(*args)
    assert all(np.array_equal(a.probes[k], b.probes[k]) for k in a.probes)
    assert np.array_equal(a.energy, b.energy)
    assert a.steps.tolist() == list(range(0, 500, 3))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_instability_is_reported(cavity_1_2):
    dt = 3.0 * cfl_time_step(cavity_1_2, 1.0)
    with pytest.raises(InstabilityError) as exc:
        run(cavity_1_2, [_pulse()], [], TimeConfig(0.5, 5000), dt=dt, check_stride=50)
    assert exc.value.step % 50 == 0


def test_off_node_probe_snaps(cavity_1_2):
    ref = resolve_node(cavity_1_2, (0.23, 0.31))
    assert ref.position == pytest.approx((0.2, 0.3))
    assert ref.snap_distance == pytest.approx(np.hypot(0.03, 0.01))
    fine = resolve_node(cavity_1_2, (0.61, 0.6))
    assert fine.block == 1
    assert fine.position == pytest.approx((0.6, 0.6))
