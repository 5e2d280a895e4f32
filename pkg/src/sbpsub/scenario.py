"""Scenario files: schema, validation, material painting and system construction.

A scenario is a YAML mapping with the keys ``domain``, ``materials``,
``regions``, ``sources``, ``probes``, ``time`` and ``output``.  Unknown keys
are rejected and every default that is filled in is listed in
``Scenario.defaults_applied``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .coupling import GlobalSystem, assemble_global_system, build_embedded_block
from .operators import MaterialField, assemble_outer_2d
from .solver import ProbeSpec, SourceSpec, TimeConfig, gaussian_tau_for_cutoff
from .topology import (EmbeddedRegionSpec, GeometryError, GridSpec, StaggeredLayout, build_indicator_masks,
                       build_layout)


class ScenarioError(ValueError):
    def __init__(self, path: str, message: str, remedy: str = ""):
        text = f"{path}: {message}" + (f" ({remedy})" if remedy else "")
        super().__init__(text)
        self.path = path


@dataclass(frozen=True)
class Shape:
    """Painted material patch: ``rect`` (bounds) or ``annulus`` (center, radii, optional gap)."""

    kind: str
    eps_rel: float = 1.0
    mu_rel: float = 1.0
    sigma: float = 0.0
    bounds: tuple | None = None
    center: tuple | None = None
    r_inner: float = 0.0
    r_outer: float = 0.0
    gap: float = 0.0
    gap_angle_deg: float = 0.0

    def contains(self, x: np.ndarray, y: np.ndarray, tol: float) -> np.ndarray:
        if self.kind == "rect":
            x0, x1, y0, y1 = self.bounds
            return (x >= x0 - tol) & (x <= x1 + tol) & (y >= y0 - tol) & (y <= y1 + tol)
        cx, cy = self.center
        dx, dy = x - cx, y - cy
        r = np.hypot(dx, dy)
        inside = (r >= self.r_inner - tol) & (r <= self.r_outer + tol)
        if self.gap > 0:
            a = np.deg2rad(self.gap_angle_deg)
            along = dx * np.cos(a) + dy * np.sin(a)
            across = -dx * np.sin(a) + dy * np.cos(a)
            inside &= ~((along > 0) & (np.abs(across) < 0.5 * self.gap - tol))
        return inside


@dataclass(frozen=True)
class MaterialSpec:
    eps_rel: float = 1.0
    mu_rel: float = 1.0
    sigma: float = 0.0
    shapes: tuple = ()

    def sample(self, layout: StaggeredLayout) -> MaterialField:
        tol = 1e-9 * min(layout.dx, layout.dy)
        out = {}
        for comp in ("ez", "hy", "hx"):
            x, y = layout.coords(comp)
            eps = np.full(x.size, self.eps_rel, dtype=float)
            mu = np.full(x.size, self.mu_rel, dtype=float)
            sig = np.full(x.size, self.sigma, dtype=float)
            for s in self.shapes:
                m = s.contains(x, y, tol)
                eps[m], mu[m], sig[m] = s.eps_rel, s.mu_rel, s.sigma
            out[comp] = (eps, mu, sig)
        return MaterialField(out["ez"][0], out["hy"][1], out["hx"][1], out["ez"][2])


@dataclass(frozen=True)
class OutputSpec:
    directory: str = "out"
    tag: str = "run"


@dataclass(frozen=True)
class Scenario:
    grid: GridSpec
    materials: MaterialSpec
    regions: tuple
    sources: tuple
    probes: tuple
    time: TimeConfig
    output: OutputSpec
    name: str = "scenario"
    defaults_applied: tuple = field(default=(), compare=False)

    def layout(self) -> StaggeredLayout:
        return build_layout(self.grid)

    def to_dict(self) -> dict:
        g = self.grid
        d = {
            "name": self.name,
            "domain": {"x_min": g.x_min, "x_max": g.x_max, "y_min": g.y_min, "y_max": g.y_max,
                       "dx": g.dx, "dy": g.dy},
            "materials": {"eps_rel": self.materials.eps_rel, "mu_rel": self.materials.mu_rel,
                          "sigma": self.materials.sigma,
                          "shapes": [_shape_dict(s) for s in self.materials.shapes]},
            "regions": [{"bounds": list(r.bounds), "ratio": f"{r.ratio[0]}:{r.ratio[1]}"}
                        for r in self.regions],
            "sources": [_source_dict(s) for s in self.sources],
            "probes": [_probe_dict(p) for p in self.probes],
            "time": {"cfl_factor": self.time.cfl_factor, "n_steps": self.time.n_steps,
                     "record_stride": self.time.record_stride},
            "output": {"dir": self.output.directory, "tag": self.output.tag},
        }
        return d

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


def _shape_dict(s: Shape) -> dict:
    d = {"kind": s.kind, "eps_rel": s.eps_rel, "mu_rel": s.mu_rel, "sigma": s.sigma}
    if s.kind == "rect":
        d["bounds"] = list(s.bounds)
    else:
        d.update(center=list(s.center), r_inner=s.r_inner, r_outer=s.r_outer, gap=s.gap,
                 gap_angle_deg=s.gap_angle_deg)
    return d


def _source_dict(s: SourceSpec) -> dict:
    d = {"name": s.name, "kind": s.kind, "mode": s.mode, "amplitude": s.amplitude, "tau": s.tau, "t0": s.t0}
    if s.kind == "modulated_gaussian":
        d["carrier"] = s.carrier
    if s.f_cut is not None:
        d["f_cut"] = s.f_cut
    if s.point is not None:
        d["point"] = list(s.point)
    else:
        d["line"] = [list(s.line[0]), list(s.line[1])]
        d["profile"] = s.profile
    return d


def _probe_dict(p: ProbeSpec) -> dict:
    d = {"name": p.name, "components": list(p.components)}
    if p.point is not None:
        d["point"] = list(p.point)
    else:
        d["line"] = [list(p.line[0]), list(p.line[1])]
    return d


# ---------------------------------------------------------------- parsing

class _Reader:
    """Key-path aware accessor for one mapping of the scenario tree."""

    def __init__(self, data, path: str, defaults: list):
        if not isinstance(data, dict):
            raise ScenarioError(path, "expected a mapping")
        self.data = data
        self.path = path
        self.defaults = defaults
        self.used = set()

    def _p(self, key):
        return f"{self.path}.{key}" if self.path else key

    def req(self, key, conv=float):
        if key not in self.data:
            raise ScenarioError(self._p(key), "missing required key", "add it to the scenario file")
        return self._conv(key, conv)

    def opt(self, key, default, conv=float):
        if key not in self.data:
            self.defaults.append(f"{self._p(key)}={default!r}")
            return default
        return self._conv(key, conv)

    def has(self, key) -> bool:
        return key in self.data

    def _conv(self, key, conv):
        self.used.add(key)
        try:
            return conv(self.data[key])
        except ScenarioError:
            raise
        except (TypeError, ValueError) as exc:
            raise ScenarioError(self._p(key), f"invalid value {self.data[key]!r}: {exc}") from None

    def child(self, key, required=True):
        if key not in self.data:
            if required:
                raise ScenarioError(self._p(key), "missing required section")
            self.defaults.append(f"{self._p(key)}=<defaults>")
            return _Reader({}, self._p(key), self.defaults)
        self.used.add(key)
        return _Reader(self.data[key], self._p(key), self.defaults)

    def items(self, key, required=True):
        if key not in self.data:
            if required:
                raise ScenarioError(self._p(key), "missing required list")
            self.defaults.append(f"{self._p(key)}=[]")
            return []
        self.used.add(key)
        seq = self.data[key] or []
        if not isinstance(seq, list):
            raise ScenarioError(self._p(key), "expected a list")
        return [_Reader(v, f"{self._p(key)}[{k}]", self.defaults) for k, v in enumerate(seq)]

    def finish(self):
        extra = sorted(set(self.data) - self.used)
        if extra:
            raise ScenarioError(self._p(extra[0]), "unknown key", "check spelling against the documented schema")


def _vec(n):
    def conv(v):
        if not isinstance(v, (list, tuple)) or len(v) != n:
            raise ValueError(f"expected a list of {n} numbers")
        return tuple(float(a) for a in v)
    return conv


def _segment(v):
    if not isinstance(v, (list, tuple)) or len(v) != 2:
        raise ValueError("expected two [x, y] points")
    return tuple(_vec(2)(p) for p in v)


def _ratio(v):
    if isinstance(v, str):
        parts = v.replace("/", ":").split(":")
    else:
        parts = list(v)
    if len(parts) != 2:
        raise ValueError("ratio must look like 'p:q'")
    p, q = (int(str(a).strip()) for a in parts)
    if p <= 0 or q <= 0:
        raise ValueError("ratio entries must be positive integers")
    return (p, q)


def _strlist(v):
    if isinstance(v, str):
        return (v,)
    return tuple(str(a) for a in v)


def _shape(r: _Reader) -> Shape:
    kind = r.req("kind", str)
    common = dict(eps_rel=r.opt("eps_rel", 1.0), mu_rel=r.opt("mu_rel", 1.0), sigma=r.opt("sigma", 0.0))
    if kind == "rect":
        s = Shape("rect", bounds=r.req("bounds", _vec(4)), **common)
    elif kind == "annulus":
        s = Shape("annulus", center=r.req("center", _vec(2)), r_inner=r.req("r_inner"),
                  r_outer=r.req("r_outer"), gap=r.opt("gap", 0.0),
                  gap_angle_deg=r.opt("gap_angle_deg", 0.0), **common)
    else:
        raise ScenarioError(f"{r.path}.kind", f"unknown shape kind {kind!r}", "use 'rect' or 'annulus'")
    r.finish()
    return s


def _source(r: _Reader, k: int) -> SourceSpec:
    kind = r.opt("kind", "gaussian", str)
    f_cut = r.opt("f_cut", None, float)
    carrier = r.opt("carrier", 0.0) if kind == "modulated_gaussian" else 0.0
    if r.has("tau"):
        tau = r.req("tau")
    elif f_cut is not None:
        half_band = f_cut - carrier if kind == "modulated_gaussian" else f_cut
        if half_band <= 0:
            raise ScenarioError(f"{r.path}.f_cut", "cutoff must exceed the carrier")
        tau = gaussian_tau_for_cutoff(half_band)
        r.defaults.append(f"{r.path}.tau={tau!r} (from f_cut)")
    else:
        raise ScenarioError(f"{r.path}.tau", "missing required key", "give tau or f_cut")
    t0 = r.opt("t0", 4.0 * tau)
    point = r.req("point", _vec(2)) if r.has("point") else None
    line = r.req("line", _segment) if r.has("line") else None
    profile = r.opt("profile", "uniform", str) if line is not None else "uniform"
    name = r.opt("name", f"src{k}", str)
    amp = r.opt("amplitude", 1.0)
    mode = r.opt("mode", "field", str)
    r.finish()
    try:
        return SourceSpec(kind, amp, tau, t0, carrier, point, line, name, profile, f_cut, mode)
    except ValueError as exc:
        raise ScenarioError(r.path, str(exc)) from None


def _probe(r: _Reader, k: int) -> ProbeSpec:
    name = r.opt("name", f"probe{k}", str)
    point = r.req("point", _vec(2)) if r.has("point") else None
    line = r.req("line", _segment) if r.has("line") else None
    comps = r.opt("components", ("Ez",), _strlist)
    r.finish()
    try:
        return ProbeSpec(name, point, line, comps)
    except ValueError as exc:
        raise ScenarioError(r.path, str(exc)) from None


def scenario_from_dict(data) -> Scenario:
    defaults: list = []
    root = _Reader(data, "", defaults)
    name = root.opt("name", "scenario", str)
    d = root.child("domain")
    try:
        grid = GridSpec(d.req("x_min"), d.req("x_max"), d.req("y_min"), d.req("y_max"), d.req("dx"),
                        d.opt("dy", d.data.get("dx")))
    except GeometryError as exc:
        raise ScenarioError("domain", str(exc)) from None
    d.finish()

    m = root.child("materials", required=False)
    mats = MaterialSpec(m.opt("eps_rel", 1.0), m.opt("mu_rel", 1.0), m.opt("sigma", 0.0),
                        tuple(_shape(s) for s in m.items("shapes", required=False)))
    m.finish()
    for s in mats.shapes + (mats,):
        if s.eps_rel < 1e-6 or s.mu_rel < 1e-6 or s.sigma < 0:
            raise ScenarioError("materials", "eps_rel, mu_rel must be >= 1e-6 and sigma >= 0")

    regions = []
    for r in root.items("regions", required=False):
        try:
            regions.append(EmbeddedRegionSpec(r.req("bounds", _vec(4)), r.req("ratio", _ratio)))
        except GeometryError as exc:
            raise ScenarioError(r.path, str(exc)) from None
        r.finish()
    sources = tuple(_source(r, k) for k, r in enumerate(root.items("sources", required=False)))
    probes = tuple(_probe(r, k) for k, r in enumerate(root.items("probes", required=False)))
    t = root.child("time")
    try:
        tc = TimeConfig(t.opt("cfl_factor", 0.99), t.req("n_steps", int), t.opt("record_stride", 1, int))
    except ValueError as exc:
        raise ScenarioError("time", str(exc)) from None
    t.finish()
    o = root.child("output", required=False)
    out = OutputSpec(o.opt("dir", "out", str), o.opt("tag", name, str))
    o.finish()
    root.finish()

    sc = Scenario(grid, mats, tuple(regions), sources, probes, tc, out, name, tuple(defaults))
    validate_geometry(sc)
    return sc


def validate_geometry(sc: Scenario) -> None:
    try:
        build_indicator_masks(sc.layout(), list(sc.regions))
    except GeometryError as exc:
        raise ScenarioError("regions", str(exc), "move or resize the embedded regions") from None


def parse_scenario(path) -> Scenario:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ScenarioError(str(p), f"cannot read scenario file: {exc}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(str(p), f"not valid YAML: {exc}") from None
    return scenario_from_dict(data)


# ---------------------------------------------------------------- construction

def build_system(sc: Scenario, with_regions: bool = True, config=None) -> GlobalSystem:
    """Assemble the coupled system of a scenario (optionally with its regions dropped)."""
    lay = sc.layout()
    regs = list(sc.regions) if with_regions else []
    masks = build_indicator_masks(lay, regs)
    outer = assemble_outer_2d(masks, sc.materials.sample(lay))
    blocks = [build_embedded_block(lay, masks, r, sc.materials.sample(r.fine_layout)) for r in masks.regions]
    return assemble_global_system(masks, config=config, outer=outer, blocks=blocks)
