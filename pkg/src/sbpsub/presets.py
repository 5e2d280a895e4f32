"""Built-in scenarios.

Desk-scale versions shrink the physical domains while keeping grid ratios,
CFL factors and the source spectra relative to the mesh.  ``full_scale=True``
returns the original dimensions where they are fully specified.
"""

from __future__ import annotations

import math

from .solver import gaussian_tau_for_cutoff

C0 = 299_792_458.0
PRESETS = ("cavity-stability", "waveguide-reflection", "srr-array", "hetero-block")


def _fine_dt(dx: float, ratio: str, cfl: float, eps_min: float = 1.0) -> float:
    p, q = (int(a) for a in ratio.split(":"))
    h = dx * p / q
    return cfl * h * math.sqrt(eps_min) / (C0 * math.sqrt(2.0))


def cavity_stability(ratio: str = "1:5", full_scale: bool = False, n_steps: int | None = None) -> dict:
    """PEC cavity with one embedded block, Gaussian pulse and a single probe."""
    s = 1.0 if full_scale else 0.2
    f_cut = 150e6
    tau = gaussian_tau_for_cutoff(f_cut)
    return {
        "name": "cavity-stability",
        "domain": {"x_min": 0.0, "x_max": 6.0 * s, "y_min": 0.0, "y_max": 6.0 * s, "dx": 0.05, "dy": 0.05},
        "materials": {"eps_rel": 1.0, "mu_rel": 1.0, "sigma": 0.0, "shapes": []},
        "regions": [{"bounds": [2.0 * s, 4.0 * s, 2.0 * s, 4.0 * s], "ratio": ratio}],
        "sources": [{"name": "src", "kind": "gaussian", "amplitude": 1.0, "tau": tau, "t0": 4.0 * tau,
                     "f_cut": f_cut, "point": [1.0 * s, 3.0 * s]}],
        "probes": [{"name": "probe", "point": [1.0 * s, 1.0 * s], "components": ["Ez"]}],
        "time": {"cfl_factor": 0.99, "n_steps": n_steps or (1_000_000 if full_scale else 100_000),
                 "record_stride": 1},
        "output": {"dir": "out", "tag": "cavity-stability"},
    }


def waveguide_geometry(block_cells: int = 20, height_cells: int = 60, dx: float = 1e-3,
                       f_cut: float = 5e9, gate_pad_cells: int = 300) -> dict:
    """Cell positions for the gated reflection test.

    The observation line sits upstream of the source; the left wall is far
    enough that its echo of the incident pulse reaches the observation line
    only after the block reflection has passed, and the right wall likewise
    for the transmitted pulse.  Spectral content near the guide cutoff
    travels slowly, so ``gate_pad_cells`` extra cells on both sides keep the
    gate open until that tail has passed; without them the truncated tail
    leaks into the low end of the reflection spectrum.
    """
    carrier = 0.5 * f_cut
    tau = gaussian_tau_for_cutoff(f_cut - carrier)
    pulse_cells = 8.0 * tau * C0 / dx
    src_gap, blk_gap = 40, 60
    x_obs = int(math.ceil((2 * (src_gap + blk_gap) + pulse_cells + 2 * block_cells - 2 * src_gap) / 2)) + 10
    x_obs += gate_pad_cells
    x_src = x_obs + src_gap
    x_blk = x_src + blk_gap
    x_end = x_blk + block_cells + int(pulse_cells / 2) + 60 + gate_pad_cells
    y_blk = (height_cells - block_cells) // 2
    t_gate = (x_src + x_obs) * dx / C0 + 4.0 * tau
    return {"dx": dx, "tau": tau, "carrier": carrier, "f_cut": f_cut, "x_obs": x_obs, "x_src": x_src,
            "x_blk": x_blk, "x_end": x_end, "y_blk": y_blk, "block": block_cells,
            "height": height_cells, "t_gate": t_gate}


def waveguide_reflection(ratio: str = "1:2", full_scale: bool = False) -> dict:
    """PEC-walled waveguide with an empty embedded block; run it and its ``--reference`` twin."""
    if full_scale:
        dx, H, L = 1e-3, 0.27, 3.6
        f_cut = 5e9
        carrier = 0.5 * f_cut
        tau = gaussian_tau_for_cutoff(f_cut - carrier)
        blk = [1.755, 1.845, 0.09, 0.18]
        x_src, x_obs = 1.7, 1.6
        t_gate = (x_src + x_obs) / C0 + 4.0 * tau
    else:
        g = waveguide_geometry()
        dx, f_cut, carrier, tau = g["dx"], g["f_cut"], g["carrier"], g["tau"]
        H, L = g["height"] * dx, g["x_end"] * dx
        blk = [g["x_blk"] * dx, (g["x_blk"] + g["block"]) * dx, g["y_blk"] * dx,
               (g["y_blk"] + g["block"]) * dx]
        x_src, x_obs = g["x_src"] * dx, g["x_obs"] * dx
        t_gate = g["t_gate"]
    cfl = 0.98
    n_steps = int(t_gate / _fine_dt(dx, ratio, cfl))
    return {
        "name": "waveguide-reflection",
        "domain": {"x_min": 0.0, "x_max": L, "y_min": 0.0, "y_max": H, "dx": dx, "dy": dx},
        "materials": {"eps_rel": 1.0, "mu_rel": 1.0, "sigma": 0.0, "shapes": []},
        "regions": [{"bounds": blk, "ratio": ratio}],
        "sources": [{"name": "src", "kind": "modulated_gaussian", "amplitude": 1.0, "tau": tau,
                     "t0": 4.0 * tau, "carrier": carrier, "f_cut": f_cut,
                     "line": [[x_src, 0.0], [x_src, H]], "profile": "sine"}],
        "probes": [{"name": "obs", "line": [[x_obs, dx], [x_obs, H - dx]], "components": ["Ez", "Hy"]}],
        "time": {"cfl_factor": cfl, "n_steps": n_steps, "record_stride": 1},
        "output": {"dir": "out", "tag": "waveguide-reflection"},
    }


def _srr_element(cx: float, cy: float, sigma: float) -> list:
    """Two concentric split rings (outer gap facing +x, inner facing -x)."""
    w = 0.5e-3
    return [
        {"kind": "annulus", "center": [cx, cy], "r_inner": 2.5e-3 - w, "r_outer": 2.5e-3,
         "gap": w, "gap_angle_deg": 0.0, "eps_rel": 1.0, "mu_rel": 1.0, "sigma": sigma},
        {"kind": "annulus", "center": [cx, cy], "r_inner": 1.5e-3 - w, "r_outer": 1.5e-3,
         "gap": w, "gap_angle_deg": 180.0, "eps_rel": 1.0, "mu_rel": 1.0, "sigma": sigma},
    ]


def srr_array(ratio: str = "1:5", full_scale: bool = False, n_steps: int | None = None) -> dict:
    """Two separated 2x2 split-ring arrays in a PEC cavity (geometry chosen here, see docs)."""
    L = 50e-3
    dx = 0.5e-3 if full_scale else 1e-3
    sigma = 1e6
    shapes, regions = [], []
    for x0 in (8e-3, 30e-3):
        y0 = 19e-3
        regions.append({"bounds": [x0, x0 + 12e-3, y0, y0 + 12e-3], "ratio": ratio})
        for ex in (3e-3, 9e-3):
            for ey in (3e-3, 9e-3):
                shapes += _srr_element(x0 + ex, y0 + ey, sigma)
    f_cut = 20e9
    tau = gaussian_tau_for_cutoff(f_cut)
    return {
        "name": "srr-array",
        "domain": {"x_min": 0.0, "x_max": L, "y_min": 0.0, "y_max": L, "dx": dx, "dy": dx},
        "materials": {"eps_rel": 1.0, "mu_rel": 1.0, "sigma": 0.0, "shapes": shapes},
        "regions": regions,
        "sources": [{"name": "src", "kind": "gaussian", "amplitude": 1.0, "tau": tau, "t0": 4.0 * tau,
                     "f_cut": f_cut, "point": [L / 2, L / 2 + 5e-3]}],
        "probes": [{"name": "probe", "point": [L / 2, L / 2 - 5e-3], "components": ["Ez"]}],
        "time": {"cfl_factor": 0.9, "n_steps": n_steps or 20_000, "record_stride": 1},
        "output": {"dir": "out", "tag": "srr-array"},
    }


HETERO_LAYERS = (
    # (bounds in m, eps_rel, sigma S/m), painted in order
    ((0.14, 0.26, 0.14, 0.26), 40.0, 0.7),
    ((0.15, 0.25, 0.15, 0.25), 5.5, 0.04),
    ((0.16, 0.24, 0.16, 0.24), 52.0, 0.9),
    ((0.18, 0.22, 0.17, 0.21), 69.0, 3.4),
)


def hetero_block(ratio: str = "1:5", full_scale: bool = False, n_steps: int | None = None,
                 uniform_fine: bool = False) -> dict:
    """Layered dielectric phantom inside one embedded block.

    ``uniform_fine`` returns the global-fine reference at the finest (1:10)
    spacing without an embedded block.
    """
    dx = 0.01
    f_cut = 1e9
    tau = 0.48e-9
    shapes = [{"kind": "rect", "bounds": list(b), "eps_rel": e, "mu_rel": 1.0, "sigma": s}
              for b, e, s in HETERO_LAYERS]
    t_end = 8e-9
    cfl = 0.99
    if uniform_fine:
        dom_dx = dx / 10
        regions = []
        dt = cfl * dom_dx / (C0 * math.sqrt(2.0))
    else:
        dom_dx = dx
        regions = [{"bounds": [0.12, 0.28, 0.12, 0.28], "ratio": ratio}]
        dt = _fine_dt(dx, ratio, cfl)
    return {
        "name": "hetero-block",
        "domain": {"x_min": 0.0, "x_max": 0.4, "y_min": 0.0, "y_max": 0.4, "dx": dom_dx, "dy": dom_dx},
        "materials": {"eps_rel": 1.0, "mu_rel": 1.0, "sigma": 0.0, "shapes": shapes},
        "regions": regions,
        "sources": [{"name": "src", "kind": "gaussian", "mode": "current", "amplitude": 1.0, "tau": tau,
                     "t0": 1.77e-9,
                     "f_cut": f_cut, "point": [0.06, 0.2]}],
        "probes": [{"name": "probe", "point": [0.2, 0.2], "components": ["Ez"]},
                   {"name": "outside", "point": [0.34, 0.2], "components": ["Ez"]}],
        "time": {"cfl_factor": cfl, "n_steps": n_steps or int(t_end / dt), "record_stride": 1},
        "output": {"dir": "out", "tag": "hetero-block"},
    }


def get_preset(name: str, ratio: str | None = None, full_scale: bool = False, **kw) -> dict:
    table = {"cavity-stability": cavity_stability, "waveguide-reflection": waveguide_reflection,
             "srr-array": srr_array, "hetero-block": hetero_block}
    if name not in table:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    args = dict(full_scale=full_scale, **kw)
    if ratio is not None:
        args["ratio"] = ratio
    return table[name](**args)
