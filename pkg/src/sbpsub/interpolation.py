"""Coarse/fine interface transfer matrices for integer and fractional grid ratios.

The prolongation ``T_c2f`` is the closest matrix (Frobenius norm, on a
banded support) to plain linear interpolation that

* reproduces constants on every fine row,
* reproduces linear profiles on every interior fine row,
* maps the coarse endpoints onto the coincident fine endpoints, and
* satisfies ``T_c2f.T @ P_fine @ 1 == P_coarse_ref @ 1``.

The restriction is then defined as the norm adjoint
``T_f2c = inv(P_coarse_ref) @ T_c2f.T @ P_fine``, which makes the aligned
compatibility ``T_f2c.T @ P_coarse_ref == P_fine @ T_c2f`` hold to
round-off and preserves constants because of the last constraint.

For the non-split topology the outer interface norm is uniform; the boundary
transform ``B_c = diag(1/2, 1, ..., 1, 1/2)`` converts between the two.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

CONSTRAINT_TOL = 1e-12
STENCIL_WIDTH = 4
_DENSE_LIMIT = 4000


class InterpolationError(ValueError):
    pass


def sbp_norm(n: int, h: float = 1.0) -> np.ndarray:
    w = np.full(n, h, dtype=float)
    w[[0, -1]] = 0.5 * h
    return w


def boundary_transform(n: int) -> np.ndarray:
    """Diagonal of ``B_c``."""
    return sbp_norm(n, 1.0)


@dataclass(frozen=True)
class InterpolationPair:
    T_c2f: np.ndarray
    T_f2c: np.ndarray
    ratio: tuple[int, int]
    h_coarse: float
    h_fine: float

    @property
    def n_coarse(self) -> int:
        return self.T_c2f.shape[1]

    @property
    def n_fine(self) -> int:
        return self.T_c2f.shape[0]

    @property
    def B_c(self) -> np.ndarray:
        return np.diag(boundary_transform(self.n_coarse))

    @property
    def P_fine(self) -> np.ndarray:
        return sbp_norm(self.n_fine, self.h_fine)

    @property
    def P_coarse_ref(self) -> np.ndarray:
        return sbp_norm(self.n_coarse, self.h_coarse)

    @property
    def P_coarse_uniform(self) -> np.ndarray:
        return np.full(self.n_coarse, self.h_coarse)

    def aligned_residual(self) -> float:
        lhs = self.T_f2c.T * self.P_coarse_ref[None, :]
        rhs = self.P_fine[:, None] * self.T_c2f
        return float(np.max(np.abs(lhs - rhs)) / self.h_coarse)


def _positions(n_coarse: int, ratio) -> list[Fraction]:
    p, q = int(ratio[0]), int(ratio[1])
    n_fine_cells = Fraction((n_coarse - 1) * q, p)
    if n_fine_cells.denominator != 1:
        raise InterpolationError(f"ratio {p}:{q} does not tile {n_coarse - 1} coarse cells")
    return [Fraction(i * p, q) for i in range(int(n_fine_cells) + 1)]


def _support(x: Fraction, n_coarse: int, width: int) -> np.ndarray:
    order = sorted(range(n_coarse), key=lambda k: (abs(Fraction(k) - x), k))
    return np.sort(np.array(order[:width], dtype=int))


def build_base_pair(n_coarse: int, n_fine: int, ratio, h_coarse: float = 1.0,
                    width: int = STENCIL_WIDTH) -> InterpolationPair:
    """Aligned-block prolongation/restriction pair between ``n_coarse`` and ``n_fine`` nodes."""
    xs = _positions(n_coarse, ratio)
    if len(xs) != n_fine:
        raise InterpolationError(
            f"geometry mismatch: {n_coarse} coarse nodes at ratio {ratio[0]}:{ratio[1]} "
            f"give {len(xs)} fine nodes, not {n_fine}")
    if n_coarse < 2:
        raise InterpolationError("an interface needs at least 2 coarse nodes")
    h_fine = h_coarse * ratio[0] / ratio[1]
    xf = np.array([float(x) for x in xs])

    T = np.zeros((n_fine, n_coarse))
    for i, x in enumerate(xs):
        k = min(int(x), n_coarse - 2)
        t = float(x - k)
        T[i, k] += 1.0 - t
        T[i, k + 1] += t

    Pf = sbp_norm(n_fine, 1.0) * (ratio[0] / ratio[1])
    Pc = sbp_norm(n_coarse, 1.0)
    col_res = Pc - Pf @ T
    if np.max(np.abs(col_res)) > CONSTRAINT_TOL:
        T = _correct(T, xs, xf, Pf, Pc, col_res, n_coarse, min(width, n_coarse))

    T_f2c = (T.T * Pf[None, :]) / Pc[:, None]
    pair = InterpolationPair(T, T_f2c, (int(ratio[0]), int(ratio[1])), float(h_coarse), float(h_fine))
    _check_constraints(pair, xf)
    return pair


def _correct(T, xs, xf, Pf, Pc, col_res, n_coarse, width):
    """Minimum-norm correction of the free interior rows meeting all constraints."""
    n_fine = len(xs)
    var_rows, var_cols = [], []
    for i in range(1, n_fine - 1):
        for k in _support(xs[i], n_coarse, width):
            var_rows.append(i)
            var_cols.append(int(k))
    var_rows = np.array(var_rows)
    var_cols = np.array(var_cols)
    nv = len(var_rows)
    xc = np.arange(n_coarse, dtype=float)
    r_idx, c_idx, vals, rhs = [], [], [], []
    row = 0
    # row sums and first moments: the linear start already satisfies them, so
    # the correction must have zero sum and zero moment on each free row
    for i in range(1, n_fine - 1):
        sel = np.nonzero(var_rows == i)[0]
        r_idx += [row] * len(sel)
        c_idx += list(sel)
        vals += [1.0] * len(sel)
        rhs.append(0.0)
        row += 1
        r_idx += [row] * len(sel)
        c_idx += list(sel)
        vals += list(xc[var_cols[sel]] - xf[i])
        rhs.append(0.0)
        row += 1
    for k in range(n_coarse):
        sel = np.nonzero(var_cols == k)[0]
        r_idx += [row] * len(sel)
        c_idx += list(sel)
        vals += list(Pf[var_rows[sel]])
        rhs.append(col_res[k])
        row += 1
    A = sp.csr_matrix((vals, (r_idx, c_idx)), shape=(row, nv))
    b = np.array(rhs)
    if nv <= _DENSE_LIMIT:
        delta = sla.lstsq(A.toarray(), b, lapack_driver="gelsd")[0]
    else:
        delta = spla.lsqr(A, b, atol=0.0, btol=0.0, conlim=0.0, iter_lim=20 * nv)[0]
    if np.max(np.abs(A @ delta - b)) > CONSTRAINT_TOL:
        raise InterpolationError(
            f"constraint system infeasible for {n_coarse} coarse nodes with stencil width {width}; "
            f"use at least {width + 1} coarse nodes or widen the stencil")
    T = T.copy()
    np.add.at(T, (var_rows, var_cols), delta)
    return T


def _check_constraints(pair: InterpolationPair, xf: np.ndarray) -> None:
    T = pair.T_c2f
    if np.max(np.abs(T.sum(axis=1) - 1.0)) > CONSTRAINT_TOL:
        raise InterpolationError("prolongation does not preserve constants")
    if np.max(np.abs(pair.T_f2c.sum(axis=1) - 1.0)) > CONSTRAINT_TOL:
        raise InterpolationError("restriction does not preserve constants")
    lin = T @ np.arange(T.shape[1], dtype=float) - xf
    if np.max(np.abs(lin[1:-1])) > CONSTRAINT_TOL * max(1.0, T.shape[1]):
        raise InterpolationError("prolongation does not reproduce linear profiles")


@dataclass(frozen=True)
class NonSplitPair:
    """Transfer matrices for a non-split interface.

    ``T_W`` (N_h x N_hat) carries the embedded trace to the outer side and
    ``T_hat_W`` (N_hat x N_h) carries the outer trace to the embedded side.
    """

    base: InterpolationPair
    T_W: np.ndarray
    T_hat_W: np.ndarray

    @property
    def P_outer(self) -> np.ndarray:
        return self.base.P_coarse_uniform

    @property
    def P_fine(self) -> np.ndarray:
        return self.base.P_fine

    def compatibility_residual(self) -> float:
        """Max |T_W^T P_outer - P_fine T_hat_W|, relative to the coarse spacing."""
        lhs = self.T_W.T * self.P_outer[None, :]
        rhs = self.P_fine[:, None] * self.T_hat_W
        return float(np.max(np.abs(lhs - rhs)) / self.base.h_coarse)


def apply_boundary_transform(pair: InterpolationPair) -> NonSplitPair:
    bc = boundary_transform(pair.n_coarse)
    return NonSplitPair(pair, bc[:, None] * pair.T_f2c, pair.T_c2f.copy())


def build_interface_pair(n_coarse: int, ratio, h_coarse: float = 1.0) -> NonSplitPair:
    p, q = int(ratio[0]), int(ratio[1])
    n_fine = (n_coarse - 1) * q // p + 1
    return apply_boundary_transform(build_base_pair(n_coarse, n_fine, (p, q), h_coarse))


def interior_rows(pair: InterpolationPair, margin: float = 2.0) -> np.ndarray:
    """Fine rows at least ``margin`` coarse spacings away from both ends."""
    x = np.arange(pair.n_fine) * pair.ratio[0] / pair.ratio[1]
    L = pair.n_coarse - 1
    return np.nonzero((x >= margin - 1e-12) & (x <= L - margin + 1e-12))[0]


def accuracy_report(pair: InterpolationPair, length: float = 1.0) -> dict:
    """Max prolongation error for constant, linear and quadratic profiles.

    The interface is mapped to ``[0, length]``; errors are split into
    interior rows and closure rows.
    """
    xc = np.linspace(0.0, length, pair.n_coarse)
    xf = np.linspace(0.0, length, pair.n_fine)
    inner = interior_rows(pair)
    closure = np.setdiff1d(np.arange(pair.n_fine), inner)
    out = {}
    for name, f in (("constant", lambda x: np.ones_like(x)), ("linear", lambda x: 0.3 + 2.0 * x),
                    ("quadratic", lambda x: x**2)):
        err = np.abs(pair.T_c2f @ f(xc) - f(xf))
        out[name] = {
            "interior": float(err[inner].max()) if inner.size else 0.0,
            "closure": float(err[closure].max()) if closure.size else 0.0,
        }
    return out
