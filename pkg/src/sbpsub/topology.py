"""Staggered grid layouts, embedded-region geometry and indicator masks.

Node ordering is x-major / y-minor everywhere: the Ez node ``(i, j)`` of an
``nx x ny`` cell block has flat index ``i * (ny + 1) + j``.  Hy lives on
``(i + 1/2, j)`` with flat index ``i * (ny + 1) + j`` and Hx on
``(i, j + 1/2)`` with flat index ``i * ny + j``.  Kronecker products are
therefore always written ``x_factor (x) y_factor``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

REL_TOL = 1e-9

# Side name -> (axis of the side's normal, sign of the energy flux seen by
# the outer region).  Used by the coupling code to orient SAT terms.
SIDES = ("W", "E", "S", "N")
SIDE_KAPPA = {"W": 1.0, "E": -1.0, "S": -1.0, "N": 1.0}

# Minimum clearance, in coarse cells, between an embedded region and the
# outer wall or another region.  Each 1-D segment left between two
# boundaries must support the two-row boundary closure.
MIN_GAP_CELLS = 2


class GeometryError(ValueError):
    """Raised for invalid grid or embedded-region geometry."""


def _as_int_count(length: float, h: float, what: str) -> int:
    n = length / h
    k = int(round(n))
    if k <= 0 or abs(n - k) > REL_TOL * max(1.0, abs(n)):
        raise GeometryError(f"{what}: {length!r} / {h!r} = {n!r} is not an integer cell count")
    return k


@dataclass(frozen=True)
class GridSpec:
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    dx: float
    dy: float

    def __post_init__(self):
        if not self.x_max > self.x_min:
            raise GeometryError("x axis: x_max must exceed x_min")
        if not self.y_max > self.y_min:
            raise GeometryError("y axis: y_max must exceed y_min")
        if self.dx <= 0 or self.dy <= 0:
            raise GeometryError("cell sizes dx, dy must be positive")
        _as_int_count(self.x_max - self.x_min, self.dx, "x axis")
        _as_int_count(self.y_max - self.y_min, self.dy, "y axis")

    @property
    def nx(self) -> int:
        return _as_int_count(self.x_max - self.x_min, self.dx, "x axis")

    @property
    def ny(self) -> int:
        return _as_int_count(self.y_max - self.y_min, self.dy, "y axis")


@dataclass(frozen=True)
class EmbeddedRegionSpec:
    """Rectangular fine-mesh region.

    ``ratio = (p, q)`` means coarse:fine = p:q, i.e. the fine cell is
    ``p / q`` coarse cells wide (1:5 -> one fifth, 2:3 -> two thirds).
    """

    bounds: tuple[float, float, float, float]  # x0, x1, y0, y1
    ratio: tuple[int, int]

    def __post_init__(self):
        p, q = self.ratio
        if int(p) != p or int(q) != q or p <= 0 or q <= 0:
            raise GeometryError(f"ratio {self.ratio!r} must be a pair of positive integers")
        x0, x1, y0, y1 = self.bounds
        if not (x1 > x0 and y1 > y0):
            raise GeometryError(f"bounds {self.bounds!r} must satisfy x0 < x1 and y0 < y1")

    @property
    def ratio_fraction(self) -> Fraction:
        return Fraction(int(self.ratio[0]), int(self.ratio[1]))


@dataclass(frozen=True)
class StaggeredLayout:
    """Yee node enumeration for an ``nx x ny`` cell block with origin ``(x0, y0)``."""

    nx: int
    ny: int
    dx: float
    dy: float
    x0: float = 0.0
    y0: float = 0.0

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise GeometryError("layout needs at least one cell per direction")

    @property
    def n_ez(self) -> int:
        return (self.nx + 1) * (self.ny + 1)

    @property
    def n_hy(self) -> int:
        return self.nx * (self.ny + 1)

    @property
    def n_hx(self) -> int:
        return (self.nx + 1) * self.ny

    def ez_index(self, i, j):
        return np.asarray(i) * (self.ny + 1) + np.asarray(j)

    def hy_index(self, i, j):
        """Index of Hy at ``(i + 1/2, j)``."""
        return np.asarray(i) * (self.ny + 1) + np.asarray(j)

    def hx_index(self, i, j):
        """Index of Hx at ``(i, j + 1/2)``."""
        return np.asarray(i) * self.ny + np.asarray(j)

    def ez_ij(self, k):
        return np.divmod(np.asarray(k), self.ny + 1)

    def hy_ij(self, k):
        return np.divmod(np.asarray(k), self.ny + 1)

    def hx_ij(self, k):
        return np.divmod(np.asarray(k), self.ny)

    def x_int(self) -> np.ndarray:
        return self.x0 + self.dx * np.arange(self.nx + 1)

    def x_half(self) -> np.ndarray:
        return self.x0 + self.dx * (np.arange(self.nx) + 0.5)

    def y_int(self) -> np.ndarray:
        return self.y0 + self.dy * np.arange(self.ny + 1)

    def y_half(self) -> np.ndarray:
        return self.y0 + self.dy * (np.arange(self.ny) + 0.5)

    def coords(self, component: str) -> tuple[np.ndarray, np.ndarray]:
        """Flattened (x, y) node coordinates of ``'ez'``, ``'hy'`` or ``'hx'``."""
        xs = {"ez": self.x_int(), "hy": self.x_half(), "hx": self.x_int()}[component]
        ys = {"ez": self.y_int(), "hy": self.y_int(), "hx": self.y_half()}[component]
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        return X.ravel(), Y.ravel()


def build_layout(spec: GridSpec) -> StaggeredLayout:
    return StaggeredLayout(spec.nx, spec.ny, spec.dx, spec.dy, spec.x_min, spec.y_min)


@dataclass(frozen=True)
class RegionIndex:
    """An embedded region resolved against the coarse layout."""

    ax: int
    bx: int
    ay: int
    by: int
    ratio: tuple[int, int]
    nfx: int
    nfy: int
    hfx: float
    hfy: float
    x0: float
    y0: float

    @property
    def fine_layout(self) -> StaggeredLayout:
        return StaggeredLayout(self.nfx, self.nfy, self.hfx, self.hfy, self.x0, self.y0)

    def cuts_x(self, i: int) -> tuple[bool, bool]:
        """Whether the left / right half-strips of x-line ``i`` meet the hole."""
        return (self.ax < i <= self.bx, self.ax <= i < self.bx)

    def cuts_y(self, j: int) -> tuple[bool, bool]:
        return (self.ay < j <= self.by, self.ay <= j < self.by)


def _snap_index(v: float, origin: float, h: float, what: str) -> int:
    k = (v - origin) / h
    ki = int(round(k))
    if abs(k - ki) > REL_TOL * max(1.0, abs(k)):
        raise GeometryError(f"{what}={v!r} is not aligned to a coarse grid line")
    return ki


def resolve_region(layout: StaggeredLayout, region: EmbeddedRegionSpec) -> RegionIndex:
    x0, x1, y0, y1 = region.bounds
    ax = _snap_index(x0, layout.x0, layout.dx, "bounds.x0")
    bx = _snap_index(x1, layout.x0, layout.dx, "bounds.x1")
    ay = _snap_index(y0, layout.y0, layout.dy, "bounds.y0")
    by = _snap_index(y1, layout.y0, layout.dy, "bounds.y1")
    g = MIN_GAP_CELLS
    if ax < g or ay < g or bx > layout.nx - g or by > layout.ny - g:
        raise GeometryError(
            f"region {region.bounds!r} must keep {g} coarse cells of clearance from the outer wall"
        )
    if bx - ax < 2 or by - ay < 2:
        raise GeometryError(f"region {region.bounds!r} must span at least 2 coarse cells per side")
    r = region.ratio_fraction
    fx = Fraction(bx - ax) / r
    fy = Fraction(by - ay) / r
    if fx.denominator != 1 or fy.denominator != 1:
        raise GeometryError(
            f"ratio {region.ratio[0]}:{region.ratio[1]} does not tile region {region.bounds!r} "
            "with whole fine cells"
        )
    nfx, nfy = int(fx), int(fy)
    if nfx < 2 or nfy < 2:
        raise GeometryError("embedded block needs at least 2x2 fine cells")
    hfx = layout.dx * float(r)
    hfy = layout.dy * float(r)
    return RegionIndex(ax, bx, ay, by, (int(region.ratio[0]), int(region.ratio[1])), nfx, nfy,
                       hfx, hfy, layout.x0 + ax * layout.dx, layout.y0 + ay * layout.dy)


def _check_separation(regs: list[RegionIndex]) -> None:
    for a in range(len(regs)):
        for b in range(a + 1, len(regs)):
            r, s = regs[a], regs[b]
            gap_x = max(s.ax - r.bx, r.ax - s.bx)
            gap_y = max(s.ay - r.by, r.ay - s.by)
            if gap_x < MIN_GAP_CELLS and gap_y < MIN_GAP_CELLS:
                raise GeometryError(
                    f"regions {a} and {b} overlap or are closer than {MIN_GAP_CELLS} coarse cells"
                )


@dataclass(frozen=True)
class TopologyMasks:
    """Indicator data for the multi-connected outer region.

    Line classes (1-D, per direction): ``*_omega`` marks grid lines that never
    touch a hole, ``*_boundary`` lines lying on a hole face and ``*_hole``
    lines that cross a hole interior.  On half-integer lines only the
    ``omega``/``hole`` split exists.

    Node masks (2-D, flattened): ``ez_omega + ez_boundary`` is the universal
    indicator, zero exactly on hole-interior Ez nodes, which ``ez_hole``
    marks.  ``hy_weight``/``hx_weight`` are the fraction of each magnetic
    node's dual cell lying in the outer region; a node is active iff its
    weight is positive.
    """

    layout: StaggeredLayout
    regions: tuple[RegionIndex, ...]
    x_omega: np.ndarray
    x_boundary: np.ndarray
    x_hole: np.ndarray
    xh_omega: np.ndarray
    xh_hole: np.ndarray
    y_omega: np.ndarray
    y_boundary: np.ndarray
    y_hole: np.ndarray
    yh_omega: np.ndarray
    yh_hole: np.ndarray
    ez_omega: np.ndarray
    ez_boundary: np.ndarray
    ez_hole: np.ndarray
    hy_weight: np.ndarray
    hx_weight: np.ndarray
    ez_weight: np.ndarray = field(repr=False)

    @property
    def ez_universal(self) -> np.ndarray:
        return self.ez_omega + self.ez_boundary

    @property
    def hy_active(self) -> np.ndarray:
        return self.hy_weight > 0

    @property
    def hx_active(self) -> np.ndarray:
        return self.hx_weight > 0

    def holes_on_y_line(self, j: int) -> list[tuple[int, int]]:
        """Boundary rows ``(p, q)`` of every hole crossed by the x-directed line at ``y_j``."""
        return sorted((r.ax, r.bx) for r in self.regions if r.ay < j < r.by)

    def holes_on_x_line(self, i: int) -> list[tuple[int, int]]:
        return sorted((r.ay, r.by) for r in self.regions if r.ax < i < r.bx)


def _quarter_area(n_a: int, n_b: int, cut) -> np.ndarray:
    """Area fraction of the dual cells of integer nodes on an (n_a+1)x(n_b+1) lattice.

    ``cut(i_lo, i_hi, j_lo, j_hi)`` tells whether the quarter cell spanning
    those half-open node intervals lies in a hole.
    """
    w = np.zeros((n_a + 1, n_b + 1))
    for di in (-1, 1):
        for dj in (-1, 1):
            ii = np.arange(n_a + 1)[:, None]
            jj = np.arange(n_b + 1)[None, :]
            ok = ((ii + di >= 0) & (ii + di <= n_a)) & ((jj + dj >= 0) & (jj + dj <= n_b))
            ok = ok & ~cut(ii, ii + di, jj, jj + dj)
            w += 0.25 * ok
    return w


def build_indicator_masks(layout: StaggeredLayout, regions) -> TopologyMasks:
    regs = tuple(resolve_region(layout, r) if isinstance(r, EmbeddedRegionSpec) else r
                 for r in regions)
    _check_separation(list(regs))
    nx, ny = layout.nx, layout.ny

    def line_classes(n, lo_hi):
        omega = np.ones(n + 1)
        bnd = np.zeros(n + 1)
        hole = np.zeros(n + 1)
        omega_h = np.ones(n)
        hole_h = np.zeros(n)
        for a, b in lo_hi:
            bnd[[a, b]] = 1.0
            hole[a + 1:b] = 1.0
            hole_h[a:b] = 1.0
        omega -= np.minimum(bnd + hole, 1.0)
        omega_h -= hole_h
        return omega, np.minimum(bnd, 1.0 - hole), hole, omega_h, hole_h

    xo, xb, xhl, xho, xhh = line_classes(nx, [(r.ax, r.bx) for r in regs])
    yo, yb, yhl, yho, yhh = line_classes(ny, [(r.ay, r.by) for r in regs])

    ii = np.arange(nx + 1)[:, None]
    jj = np.arange(ny + 1)[None, :]
    interior = np.zeros((nx + 1, ny + 1), dtype=bool)
    on_bnd = np.zeros((nx + 1, ny + 1), dtype=bool)
    for r in regs:
        inx = (ii > r.ax) & (ii < r.bx)
        iny = (jj > r.ay) & (jj < r.by)
        interior |= inx & iny
        clx = (ii >= r.ax) & (ii <= r.bx)
        cly = (jj >= r.ay) & (jj <= r.by)
        on_bnd |= clx & cly & ~(inx & iny)

    def cell_in_hole(i0, i1, j0, j1):
        lo_i, hi_i = np.minimum(i0, i1), np.maximum(i0, i1)
        lo_j, hi_j = np.minimum(j0, j1), np.maximum(j0, j1)
        out = np.zeros(np.broadcast(lo_i, lo_j).shape, dtype=bool)
        for r in regs:
            out |= (lo_i >= r.ax) & (hi_i <= r.bx) & (lo_j >= r.ay) & (hi_j <= r.by)
        return out

    ez_w = _quarter_area(nx, ny, cell_in_hole)

    # Hy at (i+1/2, j): dual cell = [i, i+1] x [j-1/2, j+1/2]
    hy_w = np.zeros((nx, ny + 1))
    i_c = np.arange(nx)[:, None]
    for dj in (-1, 1):
        ok = (jj + dj >= 0) & (jj + dj <= ny)
        half = np.zeros((nx, ny + 1), dtype=bool)
        for r in regs:
            half |= (i_c >= r.ax) & (i_c + 1 <= r.bx) & (np.minimum(jj, jj + dj) >= r.ay) & (
                np.maximum(jj, jj + dj) <= r.by)
        hy_w += 0.5 * (ok & ~half)
    # Hx at (i, j+1/2): dual cell = [i-1/2, i+1/2] x [j, j+1]
    hx_w = np.zeros((nx + 1, ny))
    j_c = np.arange(ny)[None, :]
    for di in (-1, 1):
        ok = (ii + di >= 0) & (ii + di <= nx)
        half = np.zeros((nx + 1, ny), dtype=bool)
        for r in regs:
            half |= (np.minimum(ii, ii + di) >= r.ax) & (np.maximum(ii, ii + di) <= r.bx) & (
                j_c >= r.ay) & (j_c + 1 <= r.by)
        hx_w += 0.5 * (ok & ~half)

    ez_bnd = on_bnd.astype(float).ravel()
    ez_hole = interior.astype(float).ravel()
    ez_omega = 1.0 - ez_bnd - ez_hole
    return TopologyMasks(layout, regs, xo, xb, xhl, xho, xhh, yo, yb, yhl, yho, yhh,
                         ez_omega, ez_bnd, ez_hole, hy_w.ravel(), hx_w.ravel(), ez_w.ravel())


@dataclass(frozen=True)
class InterfaceSide:
    """One of the four coupling interfaces of an embedded region.

    ``ez`` are the coarse Ez indices along the face (increasing tangential
    coordinate).  The tangential magnetic trace is extrapolated to the face
    from the two outer nodes ``h_near`` (weight 3/2) and ``h_far``
    (weight -1/2) of component ``h_component``.
    """

    name: str
    ez: np.ndarray
    h_component: str
    h_near: np.ndarray
    h_far: np.ndarray
    n_coarse: int
    n_fine: int
    h_coarse: float
    h_fine: float
    normal_axis: str
    kappa: float


@dataclass(frozen=True)
class InterfaceIndexSets:
    region: RegionIndex
    sides: dict

    def __getitem__(self, name: str) -> InterfaceSide:
        return self.sides[name]


def interface_index_sets(layout: StaggeredLayout, masks: TopologyMasks, region) -> InterfaceIndexSets:
    r = region if isinstance(region, RegionIndex) else resolve_region(layout, region)
    if r not in masks.regions:
        raise GeometryError("region was not part of the mask construction")
    sides = {}
    jy = np.arange(r.ay, r.by + 1)
    ix = np.arange(r.ax, r.bx + 1)
    ncy, ncx = r.by - r.ay + 1, r.bx - r.ax + 1
    sides["W"] = InterfaceSide("W", layout.ez_index(r.ax, jy), "hy",
                               layout.hy_index(r.ax - 1, jy), layout.hy_index(r.ax - 2, jy),
                               ncy, r.nfy + 1, layout.dy, r.hfy, "x", SIDE_KAPPA["W"])
    sides["E"] = InterfaceSide("E", layout.ez_index(r.bx, jy), "hy",
                               layout.hy_index(r.bx, jy), layout.hy_index(r.bx + 1, jy),
                               ncy, r.nfy + 1, layout.dy, r.hfy, "x", SIDE_KAPPA["E"])
    sides["S"] = InterfaceSide("S", layout.ez_index(ix, r.ay), "hx",
                               layout.hx_index(ix, r.ay - 1), layout.hx_index(ix, r.ay - 2),
                               ncx, r.nfx + 1, layout.dx, r.hfx, "y", SIDE_KAPPA["S"])
    sides["N"] = InterfaceSide("N", layout.ez_index(ix, r.by), "hx",
                               layout.hx_index(ix, r.by), layout.hx_index(ix, r.by + 1),
                               ncx, r.nfx + 1, layout.dx, r.hfx, "y", SIDE_KAPPA["N"])
    return InterfaceIndexSets(r, sides)
