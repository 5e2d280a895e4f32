"""Spectra, reflection, resonance error and stability diagnostics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .coupling import GlobalSystem

POWER_FLOOR = 1e-12
DENSE_EIG_LIMIT = 3000


@dataclass(frozen=True)
class Spectrum:
    freqs: np.ndarray
    amplitude: np.ndarray

    def __post_init__(self):
        if self.freqs.ndim != 1 or self.amplitude.shape[-1] != self.freqs.size:
            raise ValueError("spectrum amplitude length must match the frequency grid")
        if self.freqs.size > 1 and np.any(np.diff(self.freqs) <= 0):
            raise ValueError("frequency grid must be strictly increasing")

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.amplitude)


def dft(series, dt: float, freqs) -> Spectrum:
    """``X(f) = sum_n x_n exp(-i 2 pi f n dt) dt`` evaluated directly.

    ``series`` may be 1-D or 2-D (time along the first axis); the result's
    last axis runs over frequency.
    """
    x = np.asarray(series, dtype=float)
    f = np.atleast_1d(np.asarray(freqs, dtype=float))
    n = np.arange(x.shape[0])
    kern = np.exp(-2j * np.pi * np.outer(n * dt, f)) * dt
    amp = x.T @ kern
    return Spectrum(f, amp)


def port_power(ez_line, hy_line, dy: float, dt: float, freqs) -> np.ndarray:
    """``|sum_i F(Ez_i) conj(F(Hy_i)) dy|`` over an observation line.

    ``ez_line``/``hy_line`` have shape (n_time, n_nodes) or (n_time,).
    """
    ez = np.asarray(ez_line, dtype=float)
    hy = np.asarray(hy_line, dtype=float)
    if ez.shape != hy.shape:
        raise ValueError("Ez and Hy line records must have the same shape")
    if ez.ndim == 1:
        ez, hy = ez[:, None], hy[:, None]
    Fe = dft(ez, dt, freqs).amplitude
    Fh = dft(hy, dt, freqs).amplitude
    return np.abs(np.sum(Fe * np.conj(Fh), axis=0) * dy)


@dataclass(frozen=True)
class ReflectionResult:
    freqs: np.ndarray
    s11_db: np.ndarray
    p_incident: np.ndarray
    p_reflected: np.ndarray
    valid: np.ndarray


def s11(p_reflected, p_incident, freqs=None, floor: float = POWER_FLOOR) -> ReflectionResult:
    """``10 log10 |P_r / P_i|``; entries with ``P_i`` under ``floor * max(P_i)`` are NaN."""
    pr = np.abs(np.asarray(p_reflected, dtype=float))
    pi = np.abs(np.asarray(p_incident, dtype=float))
    valid = pi > floor * pi.max(initial=0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        db = np.where(valid, 10.0 * np.log10(pr / np.where(valid, pi, 1.0)), np.nan)
    f = np.arange(pr.size, dtype=float) if freqs is None else np.asarray(freqs, dtype=float)
    return ReflectionResult(f, db, pi, pr, valid)


def resonance_error(f_eval, f_ref) -> float:
    """Relative frequency error in percent."""
    return float(abs(f_eval - f_ref) / abs(f_ref) * 100.0)


def find_peaks(spec: Spectrum, rel_threshold: float = 0.1) -> list:
    """Local maxima above ``rel_threshold * max``, parabolically refined.

    Returns ``(frequency, magnitude)`` pairs in descending magnitude.
    """
    mag = spec.magnitude
    if mag.ndim != 1:
        raise ValueError("find_peaks expects a single-component spectrum")
    if mag.size < 3 or mag.max() <= 0:
        return []
    thr = rel_threshold * mag.max()
    f = spec.freqs
    out = []
    for k in range(1, mag.size - 1):
        if mag[k] > thr and mag[k] > mag[k - 1] and mag[k] >= mag[k + 1]:
            a, b, c = mag[k - 1], mag[k], mag[k + 1]
            den = a - 2 * b + c
            d = 0.5 * (a - c) / den if den != 0 else 0.0
            d = float(np.clip(d, -0.5, 0.5))
            step = 0.5 * (f[k + 1] - f[k - 1])
            out.append((float(f[k] + d * step), float(b - 0.25 * (a - c) * d)))
    out.sort(key=lambda t: -t[1])
    return out


def waveform_error(test, reference) -> float:
    """Relative L2 difference of two equally sampled waveforms."""
    t = np.asarray(test, dtype=float)
    r = np.asarray(reference, dtype=float)
    return float(np.linalg.norm(t - r) / np.linalg.norm(r))


# ---------------------------------------------------------------- diagnostics

def _active_generator(system: GlobalSystem, with_loss: bool):
    A = system.generator(with_loss)
    act = np.nonzero(system.active)[0]
    return A[act][:, act].tocsr(), system.P_glob[act]


def skew_residual(system: GlobalSystem) -> dict:
    """``max |P A + A^T P|`` on active DOFs, absolute and relative to ``max |P A|``."""
    A, P = _active_generator(system, False)
    PA = sp.diags(P) @ A
    R = (PA + PA.T).tocsr()
    R.eliminate_zeros()
    res = float(np.abs(R.data).max(initial=0.0))
    scale = float(np.abs(PA.data).max(initial=0.0))
    return {"skew_abs": res, "skew_rel": res / scale if scale > 0 else 0.0, "scale": scale}


def similarity_generator(system: GlobalSystem, with_loss: bool = False) -> sp.csr_matrix:
    """``P^{1/2} A P^{-1/2}`` on active DOFs; skew-symmetric for a lossless system."""
    A, P = _active_generator(system, with_loss)
    s = np.sqrt(P)
    return (sp.diags(s) @ A @ sp.diags(1.0 / s)).tocsr()


def eigen_report(system: GlobalSystem, with_loss: bool = False) -> dict:
    S = similarity_generator(system, with_loss)
    lam = sla.eigvals(S.toarray())
    rho = float(np.abs(lam).max(initial=0.0))
    mre = float(lam.real.max(initial=0.0)) if lam.size else 0.0
    return {"n_dof": S.shape[0], "max_real": mre, "spectral_radius": rho,
            "max_real_rel": mre / rho if rho > 0 else 0.0}


def real_part_bound(system: GlobalSystem, with_loss: bool = False) -> float:
    """Upper bound on ``max Re(lambda)`` from the symmetric part of the similarity generator.

    Every eigenvalue's real part lies in the numerical range of ``(S + S^T)/2``,
    whose 2-norm is bounded by ``sqrt(||.||_1 ||.||_inf)``.
    """
    S = similarity_generator(system, with_loss)
    M = (0.5 * (S + S.T)).tocsr()
    if M.nnz == 0:
        return 0.0
    a = abs(M)
    n1 = float(a.sum(axis=0).max())
    ninf = float(a.sum(axis=1).max())
    return float(np.sqrt(n1 * ninf))


def spectral_radius(system: GlobalSystem) -> float:
    """``sqrt(max |eig(A_E A_H)|)`` on active electric DOFs: the largest angular frequency."""
    ae = system.active_E
    M = (system.A_E @ system.A_H)[ae][:, ae]
    if M.shape[0] <= 400:
        lam = np.linalg.eigvals(M.toarray())
    else:
        lam = spla.eigs(M, k=3, which="LM", return_eigenvectors=False, tol=1e-8)
    return float(np.sqrt(np.abs(lam).max()))


def energy_rates(system: GlobalSystem, n_samples: int = 16, seed: int = 0, with_loss: bool = True) -> np.ndarray:
    """``u^T P A u / (u^T P u)`` for random active states."""
    A, P = _active_generator(system, with_loss)
    rng = np.random.default_rng(seed)
    out = np.empty(n_samples)
    for k in range(n_samples):
        u = rng.standard_normal(A.shape[0])
        out[k] = float(u @ (P * (A @ u))) / float(u @ (P * u))
    return out


def stability_diagnostics(system: GlobalSystem, dense_limit: int = DENSE_EIG_LIMIT,
                          n_samples: int = 16, seed: int = 0) -> dict:
    rep = {"n_active": int(system.active.sum())}
    rep.update(skew_residual(system))
    lossy = bool(np.any(system.loss > 0))
    rates = energy_rates(system, n_samples, seed, with_loss=lossy)
    rep["energy_rate_max"] = float(rates.max())
    if rep["n_active"] <= dense_limit:
        rep.update(eigen_report(system, with_loss=lossy))
    else:
        rho = spectral_radius(system)
        bound = real_part_bound(system, with_loss=lossy)
        rep.update({"n_dof": rep["n_active"], "max_real_bound": bound, "spectral_radius": rho,
                    "max_real_rel": bound / rho if rho > 0 else 0.0})
    return rep


def format_report(rep: dict) -> str:
    return "\n".join(f"{k}={v!r}" if not isinstance(v, float) else f"{k}={v:.17g}" for k, v in rep.items())
