"""Second-order staggered SBP operators and their 2-D assembly.

One-dimensional conventions: a line of ``n`` cells carries ``n + 1`` integer
(electric) nodes and ``n`` half-integer (magnetic) nodes.  ``D_minus`` maps
half-integer values to integer nodes, ``D_plus`` the reverse, and

    P_minus @ D_minus + (P_plus @ D_plus).T = B,

with ``B`` non-zero only in its first and last rows.  The boundary rows of
``B`` are ``-e_L p_L^T + e_R p_R^T`` where ``p_L``/``p_R`` extrapolate the
magnetic field to the line ends with weights (3/2, -1/2).

In the multi-connected outer region a grid line is split into two
half-strips (the halves of its dual strip on either side of the line).  Each
half-strip sees a possibly different set of holes, and the line operator is
the average of the two segmented operators.  Working with the weighted form
``Q = P D`` keeps the assembly exact: the 2-D norm of every node equals the
area of its dual cell inside the outer region.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .topology import GeometryError, StaggeredLayout, TopologyMasks, build_indicator_masks

EPS0 = 8.8541878128e-12
C0 = 299_792_458.0
MU0 = 1.0 / (EPS0 * C0**2)

EXTRAP = (1.5, -0.5)


@dataclass(frozen=True)
class OperatorSet1D:
    n: int
    h: float
    D_minus: sp.csr_matrix
    D_plus: sp.csr_matrix
    P_minus: np.ndarray
    P_plus: np.ndarray

    @property
    def p_left(self) -> np.ndarray:
        v = np.zeros(self.n)
        v[:2] = EXTRAP
        return v

    @property
    def p_right(self) -> np.ndarray:
        v = np.zeros(self.n)
        v[-2:] = EXTRAP[::-1]
        return v

    @property
    def B(self) -> sp.csr_matrix:
        return (sp.diags(self.P_minus) @ self.D_minus + (sp.diags(self.P_plus) @ self.D_plus).T).tocsr()


def build_reference_ops_1d(n_cells: int, h: float) -> OperatorSet1D:
    """Single-domain staggered operators on ``n_cells`` cells of width ``h``."""
    n = int(n_cells)
    if n < 2:
        raise GeometryError(f"n_cells={n_cells} < 2: boundary closure needs two magnetic nodes")
    rows = np.repeat(np.arange(n + 1), 2)
    cols = np.empty(2 * (n + 1), dtype=int)
    # integer node i uses (i-1/2, i+1/2), clamped to the first/last pair
    left = np.clip(np.arange(n + 1) - 1, 0, n - 2)
    cols[0::2] = left
    cols[1::2] = left + 1
    vals = np.tile([-1.0, 1.0], n + 1) / h
    Dm = sp.csr_matrix((vals, (rows, cols)), shape=(n + 1, n))
    Dp = sp.diags([-np.ones(n), np.ones(n)], [0, 1], shape=(n, n + 1), format="csr") / h
    Pm = h * np.ones(n + 1)
    Pm[[0, -1]] = 0.5 * h
    Pp = h * np.ones(n)
    return OperatorSet1D(n, h, Dm, Dp.tocsr(), Pm, Pp)


def _check_holes(n: int, holes) -> list[tuple[int, int]]:
    hs = sorted((int(p), int(q)) for p, q in holes)
    prev = 0
    for p, q in hs:
        if not (0 < p < q < n):
            raise GeometryError(f"hole ({p}, {q}) is not strictly inside a line of {n} cells")
        if p < prev:
            raise GeometryError(f"hole ({p}, {q}) overlaps a neighbouring hole")
        prev = q
    return hs


def segments(n: int, holes) -> list[tuple[int, int]]:
    """Node intervals ``[a, b]`` left between the holes of a line."""
    hs = _check_holes(n, holes)
    out, a = [], 0
    for p, q in hs:
        out.append((a, p))
        a = q
    out.append((a, n))
    return out


@dataclass(frozen=True)
class BlockedOps1D:
    """Block-diagonal concatenation of reference operators over the segments of a line.

    Hole-interior rows/columns are zero blocks; norms are zero there.
    """

    n: int
    h: float
    D_minus: sp.csr_matrix
    D_plus: sp.csr_matrix
    P_minus: np.ndarray
    P_plus: np.ndarray
    segments: tuple

    @property
    def Q(self) -> sp.csr_matrix:
        return (sp.diags(self.P_minus) @ self.D_minus).tocsr()


def blocked_omega_ops(n: int, h: float, holes) -> BlockedOps1D:
    segs = segments(n, holes)
    Dm = sp.lil_matrix((n + 1, n))
    Dp = sp.lil_matrix((n, n + 1))
    Pm = np.zeros(n + 1)
    Pp = np.zeros(n)
    for a, b in segs:
        if b - a < 2:
            raise GeometryError(f"segment [{a}, {b}] has fewer than 2 cells")
        ref = build_reference_ops_1d(b - a, h)
        Dm[a:b + 1, a:b] = ref.D_minus
        Dp[a:b, a:b + 1] = ref.D_plus
        Pm[a:b + 1] += ref.P_minus
        Pp[a:b] += ref.P_plus
    return BlockedOps1D(n, h, Dm.tocsr(), Dp.tocsr(), Pm, Pp, tuple(segs))


@dataclass(frozen=True)
class LineOps1D:
    """Weighted operators of one grid line of the outer region.

    ``Q`` is the norm-weighted difference ``P_minus @ D``; rows with zero
    norm (hole interior) are zero.  ``B = Q + D_plus.T @ diag(P_plus)``.
    """

    Q: sp.csr_matrix
    D_plus: sp.csr_matrix
    P_minus: np.ndarray
    P_plus: np.ndarray

    @property
    def D_minus(self) -> sp.csr_matrix:
        inv = np.divide(1.0, self.P_minus, out=np.zeros_like(self.P_minus), where=self.P_minus > 0)
        return (sp.diags(inv) @ self.Q).tocsr()

    @property
    def B(self) -> sp.csr_matrix:
        return (self.Q + self.D_plus.T @ sp.diags(self.P_plus)).tocsr()


def line_ops(n: int, h: float, holes_lo, holes_hi, has_lo: bool = True, has_hi: bool = True) -> LineOps1D:
    """Average of the segmented operators of the two half-strips of a line.

    ``holes_lo``/``holes_hi`` are the holes cutting each half-strip; a
    half-strip outside the domain (outer wall lines) is dropped.
    """
    Q = sp.csr_matrix((n + 1, n))
    Pm = np.zeros(n + 1)
    Pp = np.zeros(n)
    for present, holes in ((has_lo, holes_lo), (has_hi, holes_hi)):
        if not present:
            continue
        b = blocked_omega_ops(n, h, holes)
        Q = Q + 0.5 * b.Q
        Pm += 0.5 * b.P_minus
        Pp += 0.5 * b.P_plus
    Dp = build_reference_ops_1d(n, h).D_plus
    return LineOps1D(Q.tocsr(), Dp, Pm, Pp)


@dataclass(frozen=True)
class ModifiedOperators1D:
    """Operators of a line lying on a hole face (boundary rows ``p``, ``q``).

    ``D_minus_prime``, ``P_plus_prime`` and ``B_prime`` are the closed-form
    modified matrices at unit-normalised rows p and q.  ``line`` holds the
    blended operators the assembly actually uses; they are related by
    ``line.Q == diag(w) @ D_minus_prime`` with ``w = P_minus`` off the face
    and ``h/2`` on ``[p, q]``, and ``line.B`` equals ``B_prime`` with rows p
    and q halved.
    """

    D_minus_prime: sp.csr_matrix
    D_plus_prime: sp.csr_matrix
    P_minus_prime: np.ndarray
    P_plus_prime: np.ndarray
    B_prime: sp.csr_matrix
    line: LineOps1D
    face_weight: np.ndarray


def build_modified_ops_1d(n: int, h: float, holes) -> ModifiedOperators1D:
    hs = _check_holes(n, holes)
    ref = build_reference_ops_1d(n, h)
    Dm = ref.D_minus.tolil()
    Pp = np.ones(n) * h
    B = sp.lil_matrix((n + 1, n))
    B[0, 0:2] = [-1.5, 0.5]
    B[n, n - 2:n] = [-0.5, 1.5]
    w = ref.P_minus.copy()
    for p, q in hs:
        Dm[p, :] = 0.0
        Dm[p, p - 2:p + 1] = np.array([-0.5, -0.5, 1.0]) / h
        Dm[q, :] = 0.0
        Dm[q, q - 1:q + 2] = np.array([-1.0, 0.5, 0.5]) / h
        Pp[p - 1] = 2.0 * h
        Pp[q] = 2.0 * h
        B[p, p - 2:p] = [-0.5, 1.5]
        B[q, q:q + 2] = [-1.5, 0.5]
        w[p:q + 1] = 0.5 * h
    line = line_ops(n, h, [], hs)
    return ModifiedOperators1D(Dm.tocsr(), ref.D_plus, ref.P_minus.copy(), Pp, B.tocsr(), line, w)


def scale_by_materials(ops: OperatorSet1D, eps_rel, mu_rel) -> OperatorSet1D:
    """Material-scaled 1-D operators: P_x- = eps P_-, D_x- = eps^-1 D_-, same for mu on the plus side."""
    eps = EPS0 * np.broadcast_to(np.asarray(eps_rel, dtype=float), ops.P_minus.shape)
    mu = MU0 * np.broadcast_to(np.asarray(mu_rel, dtype=float), ops.P_plus.shape)
    if np.any(eps <= 0) or np.any(mu <= 0):
        raise ValueError("permittivity and permeability must be positive")
    return OperatorSet1D(ops.n, ops.h, (sp.diags(1.0 / eps) @ ops.D_minus).tocsr(),
                         (sp.diags(1.0 / mu) @ ops.D_plus).tocsr(), eps * ops.P_minus,
                         mu * ops.P_plus)


@dataclass(frozen=True)
class MaterialField:
    """Relative material samples at each component's own nodes."""

    eps_ez: np.ndarray
    mu_hy: np.ndarray
    mu_hx: np.ndarray
    sigma_ez: np.ndarray

    def __post_init__(self):
        if np.any(self.eps_ez < 1e-6) or np.any(self.mu_hy < 1e-6) or np.any(self.mu_hx < 1e-6):
            raise ValueError("relative permittivity/permeability must be >= 1e-6")
        if np.any(self.sigma_ez < 0):
            raise ValueError("conductivity must be non-negative")

    @classmethod
    def vacuum(cls, layout: StaggeredLayout) -> MaterialField:
        return cls(np.ones(layout.n_ez), np.ones(layout.n_hy), np.ones(layout.n_hx),
                   np.zeros(layout.n_ez))


@dataclass(frozen=True)
class GlobalOperators2D:
    """Assembled 2-D operators of one block (outer region or embedded block).

    Geometric parts (``Qx``, ``Qy``, ``G*``) carry no material; ``Dxm`` etc.
    are the material-scaled update operators and ``P_*`` the material-scaled
    norms (diagonals).
    """

    layout: StaggeredLayout
    Qx: sp.csr_matrix
    Qy: sp.csr_matrix
    G_ez: np.ndarray
    G_hy: np.ndarray
    G_hx: np.ndarray
    Dxm: sp.csr_matrix
    Dxp: sp.csr_matrix
    Dym: sp.csr_matrix
    Dyp: sp.csr_matrix
    P_ez: np.ndarray
    P_hy: np.ndarray
    P_hx: np.ndarray
    eps: np.ndarray
    mu_hy: np.ndarray
    mu_hx: np.ndarray
    sigma: np.ndarray


def _safe_inv(v: np.ndarray) -> np.ndarray:
    return np.divide(1.0, v, out=np.zeros_like(v), where=v > 0)


def _holes_cutting(regs, axis: str, k: int):
    lo, hi = [], []
    for r in regs:
        c_lo, c_hi = r.cuts_x(k) if axis == "x" else r.cuts_y(k)
        span = (r.ay, r.by) if axis == "x" else (r.ax, r.bx)
        if c_lo:
            lo.append(span)
        if c_hi:
            hi.append(span)
    return lo, hi


def assemble_outer_2d(masks: TopologyMasks, materials: MaterialField | None = None) -> GlobalOperators2D:
    """Global difference and norm matrices of the multi-connected outer region."""
    lay = masks.layout
    nx, ny = lay.nx, lay.ny
    materials = materials or MaterialField.vacuum(lay)
    regs = masks.regions

    G_ez_x = np.zeros(lay.n_ez)
    G_ez_y = np.zeros(lay.n_ez)
    G_hy = np.zeros(lay.n_hy)
    G_hx = np.zeros(lay.n_hx)
    qx_r, qx_c, qx_v = [], [], []
    # x-directed lines, one per y index j
    for j in range(ny + 1):
        lo, hi = _holes_cutting(regs, "y", j)
        lop = line_ops(nx, lay.dx, lo, hi, has_lo=j > 0, has_hi=j < ny)
        Q = lop.Q.tocoo()
        qx_r.append(lay.ez_index(Q.row, j))
        qx_c.append(lay.hy_index(Q.col, j))
        qx_v.append(lay.dy * Q.data)
        G_ez_x[lay.ez_index(np.arange(nx + 1), j)] = lay.dy * lop.P_minus
        G_hy[lay.hy_index(np.arange(nx), j)] = lay.dy * lop.P_plus
    qy_r, qy_c, qy_v = [], [], []
    for i in range(nx + 1):
        lo, hi = _holes_cutting(regs, "x", i)
        lop = line_ops(ny, lay.dy, lo, hi, has_lo=i > 0, has_hi=i < nx)
        Q = lop.Q.tocoo()
        qy_r.append(lay.ez_index(i, Q.row))
        qy_c.append(lay.hx_index(i, Q.col))
        qy_v.append(lay.dx * Q.data)
        G_ez_y[lay.ez_index(i, np.arange(ny + 1))] = lay.dx * lop.P_minus
        G_hx[lay.hx_index(i, np.arange(ny))] = lay.dx * lop.P_plus
    if not np.allclose(G_ez_x, G_ez_y, rtol=0, atol=1e-14 * lay.dx * lay.dy):
        raise GeometryError("inconsistent Ez norms between x and y line assemblies")
    Qx = sp.csr_matrix((np.concatenate(qx_v), (np.concatenate(qx_r), np.concatenate(qx_c))),
                       shape=(lay.n_ez, lay.n_hy))
    Qy = sp.csr_matrix((np.concatenate(qy_v), (np.concatenate(qy_r), np.concatenate(qy_c))),
                       shape=(lay.n_ez, lay.n_hx))
    Qx.sum_duplicates()
    Qy.sum_duplicates()
    Qx.eliminate_zeros()
    Qy.eliminate_zeros()
    G_ez = G_ez_x

    # plus-side differences: plain two-point stencils on active magnetic nodes
    iy, jy = lay.hy_ij(np.arange(lay.n_hy))
    Dxp = sp.csr_matrix((np.concatenate([-np.ones(lay.n_hy), np.ones(lay.n_hy)]) / lay.dx,
                         (np.tile(np.arange(lay.n_hy), 2),
                          np.concatenate([lay.ez_index(iy, jy), lay.ez_index(iy + 1, jy)]))),
                        shape=(lay.n_hy, lay.n_ez))
    ix, jx = lay.hx_ij(np.arange(lay.n_hx))
    Dyp = sp.csr_matrix((np.concatenate([-np.ones(lay.n_hx), np.ones(lay.n_hx)]) / lay.dy,
                         (np.tile(np.arange(lay.n_hx), 2),
                          np.concatenate([lay.ez_index(ix, jx), lay.ez_index(ix, jx + 1)]))),
                        shape=(lay.n_hx, lay.n_ez))
    Dxp = (sp.diags((G_hy > 0).astype(float)) @ Dxp).tocsr()
    Dyp = (sp.diags((G_hx > 0).astype(float)) @ Dyp).tocsr()

    eps = EPS0 * materials.eps_ez
    mu_y = MU0 * materials.mu_hy
    mu_x = MU0 * materials.mu_hx
    inv_ge = _safe_inv(G_ez)
    Dxm = (sp.diags(inv_ge / eps) @ Qx).tocsr()
    Dym = (sp.diags(inv_ge / eps) @ Qy).tocsr()
    return GlobalOperators2D(lay, Qx, Qy, G_ez, G_hy, G_hx, Dxm,
                             (sp.diags(1.0 / mu_y) @ Dxp).tocsr(), Dym,
                             (sp.diags(1.0 / mu_x) @ Dyp).tocsr(),
                             eps * G_ez, mu_y * G_hy, mu_x * G_hx,
                             eps, mu_y, mu_x, np.asarray(materials.sigma_ez, dtype=float))


def kron_blend_y(masks: TopologyMasks) -> sp.csr_matrix:
    """Weighted y-difference ``Qy`` written as a blend of Kronecker products.

    Valid for a single hole.  Exterior lines use the full-line operator,
    face lines the modified operator and hole-crossing lines the blocked
    one; this is an independent route to the line-by-line assembly.
    """
    lay = masks.layout
    if len(masks.regions) != 1:
        raise ValueError("Kronecker blend form is written for exactly one hole")
    r = masks.regions[0]
    ref_x = build_reference_ops_1d(lay.nx, lay.dx)
    ref_y = build_reference_ops_1d(lay.ny, lay.dy)
    QA = (sp.diags(ref_y.P_minus) @ ref_y.D_minus)
    mod = build_modified_ops_1d(lay.ny, lay.dy, [(r.ay, r.by)])
    QO = blocked_omega_ops(lay.ny, lay.dy, [(r.ay, r.by)]).Q
    return (sp.kron(sp.diags(ref_x.P_minus * masks.x_omega), QA)
            + sp.kron(sp.diags(lay.dx * masks.x_boundary), mod.line.Q)
            + sp.kron(sp.diags(lay.dx * masks.x_hole), QO)).tocsr()


@dataclass(frozen=True)
class EmbeddedOps2D:
    """Standard single-block operators plus per-side boundary traces.

    ``e_ez[s]`` selects the Ez nodes on side ``s`` (N x n_ez) and
    ``proj_h[s]`` extrapolates the tangential magnetic component to that side
    (N x n_hy for W/E, N x n_hx for S/N).
    """

    ops: GlobalOperators2D
    e_ez: dict
    proj_h: dict
    P_face: dict


def build_embedded_2d(layout: StaggeredLayout, materials: MaterialField | None = None) -> EmbeddedOps2D:
    if layout.nx < 2 or layout.ny < 2:
        raise GeometryError("embedded block must have at least 2x2 fine cells")
    ops = assemble_outer_2d(build_indicator_masks(layout, []), materials)
    nx, ny = layout.nx, layout.ny
    jy = np.arange(ny + 1)
    ix = np.arange(nx + 1)

    def sel(idx, ncols):
        return sp.csr_matrix((np.ones(len(idx)), (np.arange(len(idx)), idx)), shape=(len(idx), ncols))

    def extrap(near, far, ncols):
        k = len(near)
        return sp.csr_matrix((np.concatenate([np.full(k, EXTRAP[0]), np.full(k, EXTRAP[1])]),
                              (np.tile(np.arange(k), 2), np.concatenate([near, far]))),
                             shape=(k, ncols))

    e_ez = {
        "W": sel(layout.ez_index(0, jy), layout.n_ez),
        "E": sel(layout.ez_index(nx, jy), layout.n_ez),
        "S": sel(layout.ez_index(ix, 0), layout.n_ez),
        "N": sel(layout.ez_index(ix, ny), layout.n_ez),
    }
    proj = {
        "W": extrap(layout.hy_index(0, jy), layout.hy_index(1, jy), layout.n_hy),
        "E": extrap(layout.hy_index(nx - 1, jy), layout.hy_index(nx - 2, jy), layout.n_hy),
        "S": extrap(layout.hx_index(ix, 0), layout.hx_index(ix, 1), layout.n_hx),
        "N": extrap(layout.hx_index(ix, ny - 1), layout.hx_index(ix, ny - 2), layout.n_hx),
    }
    Py = build_reference_ops_1d(ny, layout.dy).P_minus
    Px = build_reference_ops_1d(nx, layout.dx).P_minus
    P_face = {"W": Py, "E": Py, "S": Px, "N": Px}
    return EmbeddedOps2D(ops, e_ez, proj, P_face)


def verify_sbp_identity(ops, boundary_rows=()) -> dict:
    """Residual of the 1-D summation-by-parts identity away from boundary rows.

    For an ``OperatorSet1D`` the first and last rows are the boundary rows.
    For blended line operators pass the hole-face rows in ``boundary_rows``;
    rows adjacent to any boundary row are skipped as well.
    """
    if isinstance(ops, ModifiedOperators1D):
        ops = ops.line
    M = ops.B.toarray()
    n = M.shape[1]
    skip = {0, n, *map(int, boundary_rows)}
    keep = [k for k in range(n + 1) if all(abs(k - s) > 1 for s in skip)]
    res = float(np.max(np.abs(M[keep]))) if keep else 0.0
    return {"interior_residual": res, "rows_checked": len(keep)}
