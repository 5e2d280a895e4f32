import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sbpsub.analysis import (Spectrum, dft, find_peaks, port_power, resonance_error, s11, skew_residual,
                             stability_diagnostics)

from conftest import small_cavity

DT = 1e-3


def test_dft_constant_at_dc():
    n = 64
    assert dft(np.ones(n), DT, [0.0]).amplitude[0] == pytest.approx(n * DT, rel=1e-15)


def test_dft_bin_sinusoid():
    n, k = 200, 7
    f = k / (n * DT)
    x = np.cos(2 * np.pi * f * np.arange(n) * DT)
    assert abs(dft(x, DT, [f]).amplitude[0]) == pytest.approx(n * DT / 2, rel=1e-12)


def test_dft_zero_and_impulse():
    freqs = np.linspace(0, 400, 37)
    assert not np.any(dft(np.zeros(50), DT, freqs).amplitude)
    x = np.zeros(50)
    x[0] = 1.0
    assert np.max(np.abs(np.abs(dft(x, DT, freqs).amplitude) - DT)) <= 1e-13


def test_spectrum_validation():
    with pytest.raises(ValueError):
        Spectrum(np.array([1.0, 1.0]), np.zeros(2))
    with pytest.raises(ValueError):
        Spectrum(np.array([1.0, 2.0]), np.zeros(3))


def test_port_power_basic():
    rng = np.random.default_rng(3)
    ez = rng.standard_normal((80, 5))
    hy = rng.standard_normal((80, 5))
    freqs = [10.0, 50.0]
    assert not np.any(port_power(np.zeros((80, 5)), hy, 0.1, DT, freqs))
    p = port_power(ez, hy, 0.1, DT, freqs)
    assert np.allclose(port_power(2 * ez, 2 * hy, 0.1, DT, freqs), 4 * p, rtol=1e-13)
    one = port_power(ez[:, 0], hy[:, 0], 0.1, DT, freqs)
    Fe = dft(ez[:, 0], DT, freqs).amplitude
    Fh = dft(hy[:, 0], DT, freqs).amplitude
    assert np.allclose(one, np.abs(Fe * np.conj(Fh)) * 0.1, rtol=1e-13)


def test_s11_values():
    pi = np.array([1.0, 2.0, 3.0])
    assert np.allclose(s11(pi, pi).s11_db, 0.0)
    assert np.allclose(s11(1e-6 * pi, pi).s11_db, -60.0)
    res = s11(np.array([1.0, 1.0]), np.array([1.0, 1e-14]))
    assert res.valid.tolist() == [True, False] and np.isnan(res.s11_db[1])


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-6, 1e6))
def test_s11_scale_invariance(c):
    pr = np.array([0.1, 0.5, 2.0])
    pi = np.array([1.0, 3.0, 4.0])
    assert np.allclose(s11(c * pr, c * pi).s11_db, s11(pr, pi).s11_db, atol=1e-10)


def test_resonance_error():
    assert resonance_error(5.0, 5.0) == 0.0
    assert resonance_error(1.1014, 1.0) == pytest.approx(10.14, rel=1e-12)
    assert resonance_error(0.9, 1.0) == pytest.approx(resonance_error(1.1, 1.0))


def test_find_peaks_single_and_two_tones():
    n = 4000
    t = np.arange(n) * DT
    freqs = np.linspace(1.0, 100.0, 397)
    step = freqs[1] - freqs[0]
    one = find_peaks(dft(np.sin(2 * np.pi * 23.3 * t), DT, freqs), 0.5)
    assert len(one) == 1 and abs(one[0][0] - 23.3) < step
    two = find_peaks(dft(np.sin(2 * np.pi * 20 * t) + 2 * np.sin(2 * np.pi * 60 * t), DT, freqs), 0.3)
    assert len(two) == 2
    assert abs(two[0][0] - 60) < step and abs(two[1][0] - 20) < step


def test_find_peaks_flat_is_empty():
    assert find_peaks(Spectrum(np.arange(10.0), np.ones(10))) == []


def test_no_hole_skew_absolute():
    assert skew_residual(small_cavity(None))["skew_abs"] <= 1e-12


def test_dense_stability_report(cavity_1_2):
    rep = stability_diagnostics(cavity_1_2)
    assert "max_real" in rep
    assert rep["max_real"] <= 1e-10 * rep["spectral_radius"]
    assert rep["energy_rate_max"] <= 1e-10 * rep["spectral_radius"]


def test_large_system_report_uses_bound(cavity_1_2):
    rep = stability_diagnostics(cavity_1_2, dense_limit=10)
    assert "max_real_bound" in rep and "max_real" not in rep
    assert rep["max_real_bound"] <= 1e-10 * rep["spectral_radius"]
    dense = stability_diagnostics(cavity_1_2)
    assert rep["spectral_radius"] == pytest.approx(dense["spectral_radius"], rel=1e-6)
