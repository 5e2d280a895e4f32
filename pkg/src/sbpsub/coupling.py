"""SAT coupling between the outer region and its embedded blocks.

Each face ``s`` of an embedded block contributes an interface energy rate

    kappa_s * (E_s^T Pbar H_s - Ehat_s^T Phat Hhat_s)

where ``E_s``/``H_s`` are the coarse traces (Ez on the face, tangential H
extrapolated to it), hatted quantities are the fine traces, ``Pbar`` is the
coarse face quadrature (half weights at both corners) and ``kappa_s`` is the
orientation sign (W and N positive, E and S negative).  The penalties
below cancel it exactly when

    1 + sigma_E + sigma_H = 0,   1 + sigma_hat_E + sigma_hat_H = 0,
    sigma_hat_H = sigma_E,       sigma_hat_E = sigma_H,

and the transfer pair is norm compatible (``Ptilde T_W = T_hat_W^T Phat``).
The symmetric choice ``-1/2`` everywhere meets all four.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .interpolation import NonSplitPair, build_base_pair, apply_boundary_transform
from .operators import (EXTRAP, EmbeddedOps2D, GlobalOperators2D, MaterialField, assemble_outer_2d,
                        build_embedded_2d)
from .topology import (SIDES, InterfaceIndexSets, RegionIndex, StaggeredLayout, TopologyMasks,
                       interface_index_sets)

PENALTY_TOL = 1e-14


class CouplingError(ValueError):
    pass


@dataclass(frozen=True)
class ExtractionOps:
    """Coarse-side trace operators of one interface.

    ``L_ez`` selects the face Ez nodes, ``L_h`` selects the nearest outer
    magnetic nodes and ``proj_h`` extrapolates the tangential magnetic field
    to the face.  Magnetic operators act on the stacked ``[Hy; Hx]`` vector.
    """

    side: str
    L_ez: sp.csr_matrix
    L_h: sp.csr_matrix
    proj_h: sp.csr_matrix


def _selection(idx, ncols, weight=1.0, offset=0):
    idx = np.asarray(idx, dtype=int)
    if idx.size and (idx.min() < 0 or idx.max() + offset >= ncols):
        raise CouplingError(f"interface index out of range for a vector of length {ncols}")
    return sp.csr_matrix((np.full(idx.size, float(weight)), (np.arange(idx.size), idx + offset)),
                         shape=(idx.size, ncols))


def build_extraction_ops(layout: StaggeredLayout, interfaces: InterfaceIndexSets) -> dict:
    n_h = layout.n_hy + layout.n_hx
    out = {}
    for s in SIDES:
        side = interfaces[s]
        off = 0 if side.h_component == "hy" else layout.n_hy
        L_h = _selection(side.h_near, n_h, 1.0, off)
        proj = _selection(side.h_near, n_h, EXTRAP[0], off) + _selection(side.h_far, n_h, EXTRAP[1], off)
        out[s] = ExtractionOps(s, _selection(side.ez, layout.n_ez), L_h, proj.tocsr())
    return out


def _embedded_traces(emb: EmbeddedOps2D) -> dict:
    """Fine-side (Ez selection, stacked-H extrapolation) per side."""
    lay = emb.ops.layout
    out = {}
    for s in SIDES:
        P = emb.proj_h[s]
        if s in ("W", "E"):
            P = sp.hstack([P, sp.csr_matrix((P.shape[0], lay.n_hx))])
        else:
            P = sp.hstack([sp.csr_matrix((P.shape[0], lay.n_hy)), P])
        out[s] = (emb.e_ez[s], P.tocsr())
    return out


@dataclass(frozen=True)
class SATConfig:
    """Penalties per side as ``(sigma_E, sigma_H)`` pairs."""

    outer: dict
    embedded: dict

    def __post_init__(self):
        for label, tab in (("outer", self.outer), ("embedded", self.embedded)):
            if set(tab) != set(SIDES):
                raise CouplingError(f"{label} penalties must be given for sides {SIDES}")
            for s, (se, sh) in tab.items():
                if abs(1.0 + se + sh) > PENALTY_TOL:
                    raise CouplingError(
                        f"{label} penalties on side {s} violate 1 + sigma_E + sigma_H = 0 "
                        f"(got {se}, {sh})")

    def energy_neutral(self) -> bool:
        """Whether the cross terms cancel as well (outer sigma_E == embedded sigma_H and vice versa)."""
        return all(abs(self.outer[s][0] - self.embedded[s][1]) <= PENALTY_TOL
                   and abs(self.outer[s][1] - self.embedded[s][0]) <= PENALTY_TOL for s in SIDES)


def default_penalties() -> SATConfig:
    return SATConfig({s: (-0.5, -0.5) for s in SIDES}, {s: (-0.5, -0.5) for s in SIDES})


def zero_penalties() -> dict:
    """Penalty tables with every entry zero (for testing; not a valid SATConfig)."""
    return {s: (0.0, 0.0) for s in SIDES}


@dataclass(frozen=True)
class SATBlock:
    """One SAT term ``rate += self_op @ own_field + cross_op @ other_block_field``.

    ``target`` is ``"E"`` or ``"H"`` and ``owner`` is ``"outer"`` or
    ``"embedded"``; ``self_op`` acts on the owner's field of the other kind and
    ``cross_op`` on the partner block's field of the same kind as self_op's
    input.
    """

    side: str
    target: str
    owner: str
    self_op: sp.csr_matrix
    cross_op: sp.csr_matrix


@dataclass(frozen=True)
class EmbeddedBlock:
    region: RegionIndex
    ops: EmbeddedOps2D
    interfaces: InterfaceIndexSets
    pairs: dict
    extraction: dict


def build_embedded_block(layout: StaggeredLayout, masks: TopologyMasks, region: RegionIndex,
                         materials: MaterialField | None = None) -> EmbeddedBlock:
    itf = interface_index_sets(layout, masks, region)
    emb = build_embedded_2d(region.fine_layout, materials)
    pairs = {}
    for s in SIDES:
        side = itf[s]
        base = build_base_pair(side.n_coarse, side.n_fine, region.ratio, side.h_coarse)
        pairs[s] = apply_boundary_transform(base)
    return EmbeddedBlock(region, emb, itf, pairs, build_extraction_ops(layout, itf))


def _check_dims(s, pair: NonSplitPair, ext: ExtractionOps, e_hat):
    if pair.T_W.shape != (ext.L_ez.shape[0], e_hat.shape[0]):
        raise CouplingError(
            f"side {s}: transfer matrix {pair.T_W.shape} does not match interface sizes "
            f"({ext.L_ez.shape[0]} coarse, {e_hat.shape[0]} fine)")


def assemble_embedded_sats(block: EmbeddedBlock, outer: GlobalOperators2D, config) -> list:
    """Four E-side and four H-side SAT blocks acting on the embedded fields."""
    emb = block.ops.ops
    inv_pe = sp.diags(1.0 / emb.P_ez)
    inv_ph = sp.diags(1.0 / np.concatenate([emb.P_hy, emb.P_hx]))
    traces = _embedded_traces(block.ops)
    table = config.embedded if isinstance(config, SATConfig) else config
    out = []
    for s in SIDES:
        pair, ext = block.pairs[s], block.extraction[s]
        e_hat, p_hat = traces[s]
        _check_dims(s, pair, ext, e_hat)
        kappa = block.interfaces[s].kappa
        se, sh = table[s]
        Pf = sp.diags(pair.P_fine)
        Tc2f = sp.csr_matrix(pair.T_hat_W)
        ce = -kappa * se
        ch = -kappa * sh
        out.append(SATBlock(s, "E", "embedded",
                            (ce * inv_pe @ e_hat.T @ Pf @ p_hat).tocsr(),
                            (-ce * inv_pe @ e_hat.T @ Pf @ Tc2f @ ext.proj_h).tocsr()))
        out.append(SATBlock(s, "H", "embedded",
                            (ch * inv_ph @ p_hat.T @ Pf @ e_hat).tocsr(),
                            (-ch * inv_ph @ p_hat.T @ Pf @ Tc2f @ ext.L_ez).tocsr()))
    return out


def assemble_outer_sats(block: EmbeddedBlock, outer: GlobalOperators2D, config) -> list:
    """Mirror SAT blocks on the outer fields for one embedded region."""
    inv_pe = sp.diags(np.divide(1.0, outer.P_ez, out=np.zeros_like(outer.P_ez), where=outer.P_ez > 0))
    ph = np.concatenate([outer.P_hy, outer.P_hx])
    inv_ph = sp.diags(np.divide(1.0, ph, out=np.zeros_like(ph), where=ph > 0))
    traces = _embedded_traces(block.ops)
    table = config.outer if isinstance(config, SATConfig) else config
    out = []
    for s in SIDES:
        pair, ext = block.pairs[s], block.extraction[s]
        e_hat, p_hat = traces[s]
        _check_dims(s, pair, ext, e_hat)
        kappa = block.interfaces[s].kappa
        se, sh = table[s]
        Pbar = sp.diags(pair.base.P_coarse_ref)
        PtT = sp.csr_matrix(pair.P_outer[:, None] * pair.T_W)
        ce = kappa * se
        ch = kappa * sh
        out.append(SATBlock(s, "E", "outer",
                            (ce * inv_pe @ ext.L_ez.T @ Pbar @ ext.proj_h).tocsr(),
                            (-ce * inv_pe @ ext.L_ez.T @ PtT @ p_hat).tocsr()))
        out.append(SATBlock(s, "H", "outer",
                            (ch * inv_ph @ ext.proj_h.T @ Pbar @ ext.L_ez).tocsr(),
                            (-ch * inv_ph @ ext.proj_h.T @ PtT @ e_hat).tocsr()))
    return out


@dataclass(frozen=True)
class GlobalSystem:
    """Coupled semi-discrete system ``dE/dt = A_E H - loss * E``, ``dH/dt = A_H E``.

    Block 0 is the outer region, blocks ``1..R`` the embedded regions.  The
    electric vector stacks every block's Ez; the magnetic vector stacks every
    block's ``[Hy; Hx]``.
    """

    A_E: sp.csr_matrix
    A_H: sp.csr_matrix
    P_E: np.ndarray
    P_H: np.ndarray
    loss: np.ndarray
    active_E: np.ndarray
    active_H: np.ndarray
    e_offsets: tuple
    h_offsets: tuple
    outer: GlobalOperators2D
    masks: TopologyMasks
    blocks: tuple
    sat_count: tuple = field(default=())

    @property
    def n_E(self) -> int:
        return self.P_E.size

    @property
    def n_H(self) -> int:
        return self.P_H.size

    @property
    def layouts(self) -> list:
        return [self.outer.layout] + [b.ops.ops.layout for b in self.blocks]

    def block_ops(self, k: int) -> GlobalOperators2D:
        return self.outer if k == 0 else self.blocks[k - 1].ops.ops

    def generator(self, with_loss: bool = False) -> sp.csr_matrix:
        """Full first-order generator over the stacked ``(E, H)`` vector."""
        zE = sp.csr_matrix((self.n_E, self.n_E))
        if with_loss:
            zE = -sp.diags(self.loss)
        return sp.bmat([[zE, self.A_E], [self.A_H, None]], format="csr")

    @property
    def P_glob(self) -> np.ndarray:
        return np.concatenate([self.P_E, self.P_H])

    @property
    def active(self) -> np.ndarray:
        return np.concatenate([self.active_E, self.active_H])


def _curl_blocks(ops: GlobalOperators2D):
    AE = sp.hstack([ops.Dxm, -ops.Dym]).tocsr()
    AH = sp.vstack([ops.Dxp, -ops.Dyp]).tocsr()
    return AE, AH


def _wall_mask(layout: StaggeredLayout) -> np.ndarray:
    i, j = layout.ez_ij(np.arange(layout.n_ez))
    return (i == 0) | (i == layout.nx) | (j == 0) | (j == layout.ny)


def assemble_global_system(masks: TopologyMasks, outer_materials: MaterialField | None = None,
                           fine_materials=None, config: SATConfig | None = None,
                           outer: GlobalOperators2D | None = None, blocks=None) -> GlobalSystem:
    """Curl operators of every block plus all SAT terms, with strong PEC on the outer wall.

    ``fine_materials`` is a list aligned with ``masks.regions`` (entries may
    be ``None`` for vacuum).
    """
    config = config or default_penalties()
    lay = masks.layout
    outer = outer or assemble_outer_2d(masks, outer_materials)
    if blocks is None:
        fine_materials = fine_materials or [None] * len(masks.regions)
        if len(fine_materials) != len(masks.regions):
            raise CouplingError("one fine material entry is needed per embedded region")
        blocks = [build_embedded_block(lay, masks, r, m) for r, m in zip(masks.regions, fine_materials)]
    blocks = tuple(blocks)
    all_ops = [outer] + [b.ops.ops for b in blocks]
    n_e = [o.layout.n_ez for o in all_ops]
    n_h = [o.layout.n_hy + o.layout.n_hx for o in all_ops]
    eo = np.concatenate([[0], np.cumsum(n_e)])
    ho = np.concatenate([[0], np.cumsum(n_h)])

    AE = [[None] * len(all_ops) for _ in all_ops]
    AH = [[None] * len(all_ops) for _ in all_ops]
    for k, o in enumerate(all_ops):
        AE[k][k], AH[k][k] = _curl_blocks(o)
    sat_count = []
    for k, b in enumerate(blocks, start=1):
        sats = assemble_embedded_sats(b, outer, config) + assemble_outer_sats(b, outer, config)
        n_e_sats = sum(1 for t in sats if t.target == "E" and t.owner == "embedded")
        n_h_sats = sum(1 for t in sats if t.target == "H" and t.owner == "embedded")
        if n_e_sats != 4 or n_h_sats != 4:
            raise CouplingError("an embedded region must couple through exactly four interfaces")
        sat_count.append(n_e_sats)
        for t in sats:
            own, other = (k, 0) if t.owner == "embedded" else (0, k)
            grid = AE if t.target == "E" else AH
            grid[own][own] = grid[own][own] + t.self_op
            grid[own][other] = t.cross_op if grid[own][other] is None else grid[own][other] + t.cross_op
    for k in range(len(all_ops)):
        for m in range(len(all_ops)):
            if AE[k][m] is None:
                AE[k][m] = sp.csr_matrix((n_e[k], n_h[m]))
            if AH[m][k] is None:
                AH[m][k] = sp.csr_matrix((n_h[m], n_e[k]))
    A_E = sp.bmat(AE, format="csr")
    A_H = sp.bmat(AH, format="csr")

    P_E = np.concatenate([o.P_ez for o in all_ops])
    P_H = np.concatenate([np.concatenate([o.P_hy, o.P_hx]) for o in all_ops])
    act_E = P_E > 0
    act_E[:n_e[0]] &= ~_wall_mask(lay)
    act_H = P_H > 0
    dE = sp.diags(act_E.astype(float))
    dH = sp.diags(act_H.astype(float))
    A_E = (dE @ A_E @ dH).tocsr()
    A_H = (dH @ A_H @ dE).tocsr()
    A_E.eliminate_zeros()
    A_H.eliminate_zeros()
    eps = np.concatenate([o.eps for o in all_ops])
    sig = np.concatenate([o.sigma for o in all_ops])
    loss = np.where(act_E, sig / eps, 0.0)
    return GlobalSystem(A_E, A_H, P_E, P_H, loss, act_E, act_H, tuple(eo), tuple(ho), outer, masks,
                        blocks, tuple(sat_count))
