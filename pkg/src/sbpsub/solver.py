"""Staggered leapfrog time marching of the coupled system.

Update order within step ``n``::

    H^{n+1/2} = H^{n-1/2} + dt * A_H E^n
    E^{n+1}   = ((1 - a) E^n + dt * A_E H^{n+1/2} + s^{n+1/2}) / (1 + a)

with ``a = dt * sigma / (2 eps)`` and ``s`` the soft-source increment in V/m.
Records at step ``n`` hold ``E^n``, the magnetic field averaged to integer
time ``(H^{n-1/2} + H^{n+1/2}) / 2`` and the interleaved energy
``E^n.P_E.E^n / 2 + H^{n+1/2}.P_H.H^{n-1/2} / 2``, which leapfrog conserves
exactly for a lossless skew-adjoint system.
"""

from __future__ import annotations

import time as _time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .coupling import GlobalSystem
from .operators import EPS0

FIELD_COMPONENTS = ("Ez", "Hy", "Hx")


class InstabilityError(RuntimeError):
    def __init__(self, step: int, message: str = ""):
        super().__init__(message or f"non-finite field values detected at step {step}")
        self.step = step


@dataclass(frozen=True)
class SourceSpec:
    """Soft (additive) excitation on Ez.

    ``mode="field"`` adds ``amplitude * g(t)`` volts per metre to the node
    each step; ``mode="current"`` treats ``amplitude`` as a line current in
    amperes, adding ``dt * I * g(t) / (eps * cell area)``, which is
    independent of the mesh and time step.
    """

    kind: str
    amplitude: float
    tau: float
    t0: float
    carrier: float = 0.0
    point: tuple | None = None
    line: tuple | None = None
    name: str = "src"
    profile: str = "uniform"
    f_cut: float | None = None
    mode: str = "field"

    def __post_init__(self):
        if self.mode not in ("field", "current"):
            raise ValueError(f"unknown source mode {self.mode!r}")
        if self.profile not in ("uniform", "sine"):
            raise ValueError(f"unknown source profile {self.profile!r}")
        if self.kind not in ("gaussian", "modulated_gaussian"):
            raise ValueError(f"unknown source kind {self.kind!r}")
        if not self.tau > 0:
            raise ValueError("source tau must be positive")
        if (self.point is None) == (self.line is None):
            raise ValueError("a source needs exactly one of point or line")


@dataclass(frozen=True)
class ProbeSpec:
    name: str
    point: tuple | None = None
    line: tuple | None = None
    components: tuple = ("Ez",)

    def __post_init__(self):
        if (self.point is None) == (self.line is None):
            raise ValueError(f"probe {self.name!r} needs exactly one of point or line")
        bad = [c for c in self.components if c not in FIELD_COMPONENTS]
        if bad:
            raise ValueError(f"probe {self.name!r}: unknown components {bad}")


@dataclass(frozen=True)
class TimeConfig:
    cfl_factor: float
    n_steps: int
    record_stride: int = 1

    def __post_init__(self):
        if not 0.0 < self.cfl_factor < 1.0:
            raise ValueError("cfl_factor must lie in (0, 1)")
        if self.n_steps < 0 or self.record_stride < 1:
            raise ValueError("n_steps must be >= 0 and record_stride >= 1")


def cfl_time_step(system_or_blocks, cfl_factor: float = 1.0) -> float:
    """``cfl_factor`` times the smallest per-block explicit limit.

    For a block with spacings ``dx, dy`` and fastest wave speed ``c`` the
    limit is ``1 / (c sqrt(dx^-2 + dy^-2))``.  Accepts a ``GlobalSystem`` or
    an iterable of ``GlobalOperators2D``.
    """
    if isinstance(system_or_blocks, GlobalSystem):
        blocks = [system_or_blocks.block_ops(k) for k in range(len(system_or_blocks.layouts))]
    else:
        blocks = list(system_or_blocks)
    dt = np.inf
    for ops in blocks:
        lay = ops.layout
        act = ops.G_ez > 0
        eps_min = ops.eps[act].min() if act.any() else EPS0
        mu_min = min(ops.mu_hy.min(), ops.mu_hx.min())
        c = 1.0 / np.sqrt(eps_min * mu_min)
        dt = min(dt, 1.0 / (c * np.sqrt(lay.dx**-2 + lay.dy**-2)))
    return float(cfl_factor * dt)


def spectral_time_step(system: GlobalSystem) -> float:
    """Largest stable leapfrog step ``2 / omega_max`` from the system spectrum."""
    ae = system.active_E
    M = (system.A_E @ system.A_H)[ae][:, ae]
    if M.shape[0] <= 400:
        lam = np.linalg.eigvals(-M.toarray())
    else:
        lam = spla.eigs(-M, k=4, which="LM", return_eigenvectors=False, tol=1e-10)
    return float(2.0 / np.sqrt(np.abs(lam).max()))


def source_value(spec: SourceSpec, t) -> np.ndarray | float:
    t = np.asarray(t, dtype=float)
    env = spec.amplitude * np.exp(-((t - spec.t0) / spec.tau) ** 2)
    if spec.kind == "modulated_gaussian":
        env = env * np.sin(2.0 * np.pi * spec.carrier * (t - spec.t0))
    return env if env.ndim else float(env)


def gaussian_tau_for_cutoff(f_cut: float, level_db: float = -20.0) -> float:
    """Gaussian width whose spectrum falls ``level_db`` below its peak at ``f_cut``.

    The spectrum of ``exp(-t^2/tau^2)`` is proportional to
    ``exp(-(pi f tau)^2)``.
    """
    return float(np.sqrt(-level_db / 20.0 * np.log(10.0)) / (np.pi * f_cut))


# ---------------------------------------------------------------- node lookup

@dataclass(frozen=True)
class NodeRef:
    """Resolved probe/source node: global index within the E or H vector."""

    component: str
    index: int
    block: int
    position: tuple
    snap_distance: float


def _block_for_point(system: GlobalSystem, x: float, y: float) -> int:
    tol = 1e-9 * max(system.outer.layout.dx, system.outer.layout.dy)
    for k, b in enumerate(system.blocks, start=1):
        lay = b.ops.ops.layout
        if (lay.x0 - tol <= x <= lay.x0 + lay.nx * lay.dx + tol
                and lay.y0 - tol <= y <= lay.y0 + lay.ny * lay.dy + tol):
            return k
    return 0


def resolve_node(system: GlobalSystem, point, component: str = "Ez") -> NodeRef:
    """Nearest active node of ``component`` to ``point`` in the block containing it."""
    x, y = map(float, point)
    k = _block_for_point(system, x, y)
    lay = system.layouts[k]
    xs, ys = lay.coords(component.lower())
    if component == "Ez":
        lo = system.e_offsets[k]
        active = system.active_E[lo:lo + lay.n_ez]
    else:
        lo = system.h_offsets[k] + (0 if component == "Hy" else lay.n_hy)
        n = lay.n_hy if component == "Hy" else lay.n_hx
        active = system.active_H[lo:lo + n]
    d2 = (xs - x) ** 2 + (ys - y) ** 2
    d2 = np.where(active, d2, np.inf)
    m = int(np.argmin(d2))
    if not np.isfinite(d2[m]):
        raise ValueError(f"no active {component} node near {point}")
    return NodeRef(component, lo + m, k, (float(xs[m]), float(ys[m])), float(np.sqrt(d2[m])))


def resolve_line(system: GlobalSystem, line, component: str = "Ez") -> list:
    """Distinct nearest active nodes along a straight segment, in order."""
    (x0, y0), (x1, y1) = line
    hmin = min(min(l.dx, l.dy) for l in system.layouts)
    n = max(2, int(np.ceil(np.hypot(x1 - x0, y1 - y0) / (0.5 * hmin))) + 1)
    out, seen = [], set()
    for s in np.linspace(0.0, 1.0, n):
        ref = resolve_node(system, (x0 + s * (x1 - x0), y0 + s * (y1 - y0)), component)
        if ref.index not in seen:
            seen.add(ref.index)
            out.append(ref)
    return out


# ---------------------------------------------------------------- state / energy

@dataclass
class FieldState:
    E: np.ndarray
    H: np.ndarray
    step: int = 0
    time: float = 0.0

    @classmethod
    def zeros(cls, system: GlobalSystem) -> FieldState:
        return cls(np.zeros(system.n_E), np.zeros(system.n_H))

    def block_fields(self, system: GlobalSystem, k: int) -> dict:
        lay = system.layouts[k]
        e0, h0 = system.e_offsets[k], system.h_offsets[k]
        return {"Ez": self.E[e0:e0 + lay.n_ez],
                "Hy": self.H[h0:h0 + lay.n_hy],
                "Hx": self.H[h0 + lay.n_hy:h0 + lay.n_hy + lay.n_hx]}


def discrete_energy(E: np.ndarray, H: np.ndarray, system: GlobalSystem, H_prev: np.ndarray | None = None) -> float:
    """Quadratic energy ``(E.P_E.E + H.P_H.H) / 2``; interleaved form when ``H_prev`` is given."""
    e = 0.5 * float(np.dot(E * system.P_E, E))
    h = 0.5 * float(np.dot(H * system.P_H, H if H_prev is None else H_prev))
    return e + h


# ---------------------------------------------------------------- stepping

@dataclass(frozen=True)
class _Injection:
    index: np.ndarray
    weight: np.ndarray
    spec: SourceSpec


def _line_weights(refs, spec: SourceSpec) -> np.ndarray:
    """Per-node amplitude factors; ``sine`` is a half-sine across the segment."""
    if spec.profile == "uniform" or spec.line is None:
        return np.ones(len(refs))
    (x0, y0), (x1, y1) = spec.line
    length = np.hypot(x1 - x0, y1 - y0)
    s = np.array([((r.position[0] - x0) * (x1 - x0) + (r.position[1] - y0) * (y1 - y0)) / length**2
                  for r in refs])
    return np.sin(np.pi * np.clip(s, 0.0, 1.0))


@dataclass
class Stepper:
    system: GlobalSystem
    dt: float
    sources: list = field(default_factory=list)

    def __post_init__(self):
        a = 0.5 * self.dt * self.system.loss
        self._ca = (1.0 - a) / (1.0 + a)
        self._cb = self.dt / (1.0 + a)
        self._cs = 1.0 / (1.0 + a)
        self._inj = []
        for s in self.sources:
            refs = ([resolve_node(self.system, s.point)] if s.point is not None
                    else resolve_line(self.system, s.line))
            idx = np.array([r.index for r in refs])
            w = _line_weights(refs, s) * self._cs[idx]
            if s.mode == "current":
                # line current in A: dE = dt I / (eps * dual-cell area)
                w = w * self.dt / self.system.P_E[idx]
            self._inj.append(_Injection(idx, w, s))

    def step(self, state: FieldState, keep: bool = False):
        """Advance one step in place.

        With ``keep`` the pre-step electric field and magnetic field are
        returned as ``(E^n, H^{n-1/2})``; afterwards ``state.H`` holds
        ``H^{n+1/2}``.
        """
        sysm = self.system
        E_n = state.E
        H_prev = state.H.copy() if keep else None
        state.H += self.dt * (sysm.A_H @ E_n)
        E = self._ca * E_n + self._cb * (sysm.A_E @ state.H)
        t_half = (state.step + 0.5) * self.dt
        for inj in self._inj:
            E[inj.index] += inj.weight * source_value(inj.spec, t_half)
        state.E = E
        state.step += 1
        state.time = state.step * self.dt
        return (E_n, H_prev) if keep else state


def step(state: FieldState, system: GlobalSystem, sources, dt: float) -> FieldState:
    """Single leapfrog step (convenience wrapper; build a ``Stepper`` for loops)."""
    Stepper(system, dt, list(sources)).step(state)
    return state


@dataclass
class RecordSet:
    steps: np.ndarray
    times: np.ndarray
    probes: dict
    energy: np.ndarray
    meta: dict

    def columns(self) -> list:
        return list(self.probes)


def _probe_columns(system: GlobalSystem, probes) -> tuple:
    cols, snaps = [], {}
    for p in probes:
        for comp in p.components:
            refs = ([resolve_node(system, p.point, comp)] if p.point is not None
                    else resolve_line(system, p.line, comp))
            for k, r in enumerate(refs):
                name = f"{p.name}_{comp}" if p.point is not None else f"{p.name}_{comp}_{k}"
                cols.append((name, comp, r.index))
                snaps[name] = r
    return cols, snaps


def run(system: GlobalSystem, sources, probes, time_cfg: TimeConfig, dt: float | None = None,
        check_stride: int = 100) -> RecordSet:
    """March ``time_cfg.n_steps`` steps from rest and collect records."""
    dt = cfl_time_step(system, time_cfg.cfl_factor) if dt is None else float(dt)
    stepper = Stepper(system, dt, list(sources))
    cols, snaps = _probe_columns(system, probes)
    n = time_cfg.n_steps
    stride = time_cfg.record_stride
    rec_steps = np.arange(0, n, stride)
    buf = {name: np.zeros(rec_steps.size) for name, _, _ in cols}
    energy = np.zeros(rec_steps.size)
    state = FieldState.zeros(system)
    inactive_E = ~system.active_E
    inactive_H = ~system.active_H
    t_start = _time.perf_counter()
    masked = 0.0
    r = 0
    for k in range(n):
        if k % stride == 0:
            E_k, H_prev = stepper.step(state, keep=True)
            energy[r] = discrete_energy(E_k, state.H, system, H_prev)
            H_avg = 0.5 * (H_prev + state.H)
            for name, comp, idx in cols:
                buf[name][r] = E_k[idx] if comp == "Ez" else H_avg[idx]
            r += 1
        else:
            stepper.step(state)
        if (k + 1) % check_stride == 0 or k + 1 == n:
            if not (np.all(np.isfinite(state.E)) and np.all(np.isfinite(state.H))):
                raise InstabilityError(k + 1)
            masked = max(masked, float(np.abs(state.E[inactive_E]).max(initial=0.0)),
                         float(np.abs(state.H[inactive_H]).max(initial=0.0)))
    wall = _time.perf_counter() - t_start
    meta = {
        "dt_s": dt,
        "n_steps": n,
        "record_stride": stride,
        "wall_time_s": wall,
        "steps_per_s": n / wall if wall > 0 else float("inf"),
        "max_abs_Ez_final": float(np.abs(state.E).max(initial=0.0)),
        "masked_dof_max_abs": masked,
        "final_energy_J": discrete_energy(state.E, state.H, system),
    }
    for name, ref in snaps.items():
        meta[f"snap_{name}_m"] = ref.snap_distance
    return RecordSet(rec_steps, rec_steps * dt, buf, energy, meta)
