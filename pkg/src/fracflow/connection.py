"""Canonical d-connection, torsion, curvature, Ricci tensors and the Levi-Civita distortion.

Full connection arrays use the convention
``nabla_{e_gamma} e_beta = Gamma^alpha_{beta gamma} e_alpha`` and are stored as
``Gamma[..., alpha, beta, gamma]``.  The four blocks of a d-connection map into
it as ``L^i_jk -> [i, j, k]``, ``L^a_bk -> [a, b, k]``, ``C^i_jc -> [i, j, c]``
and ``C^a_bc -> [a, b, c]`` (vertical indices shifted by ``n``).
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass

import numpy as np

from .fraccalc import FractionalOrder, as_order
from .geometry import (
    DMetric,
    NConnectionField,
    _require_chart,
    anholonomy,
    frame_derivatives,
    vertical_partials_of_N,
)

_FAULTS: set[str] = set()


@contextlib.contextmanager
def fault_injection(name: str):
    """Test hook that deliberately corrupts a formula while active.

    Only ``"candcon-sign"`` is recognised: it flips the sign of one term in the
    horizontal block ``L^i_jk`` so metric compatibility breaks.
    """
    if name != "candcon-sign":
        raise ValueError(f"unknown fault {name!r}")
    _FAULTS.add(name)
    try:
        yield
    finally:
        _FAULTS.discard(name)


@dataclass(frozen=True)
class DConnectionCoeffs:
    chart: object
    L_h: np.ndarray  # [..., i, j, k]
    L_v: np.ndarray  # [..., a, b, k]
    C_h: np.ndarray  # [..., i, j, c]
    C_v: np.ndarray  # [..., a, b, c]

    def full(self) -> np.ndarray:
        n, d = self.chart.n, self.chart.dim
        G = np.zeros(self.chart.shape + (d, d, d))
        G[..., :n, :n, :n] = self.L_h
        G[..., n:, n:, :n] = self.L_v
        G[..., :n, :n, n:] = self.C_h
        G[..., n:, n:, n:] = self.C_v
        return G


@dataclass(frozen=True)
class TorsionBlocks:
    T_hhh: np.ndarray  # T^i_jk [..., i, j, k]
    T_hhv: np.ndarray  # T^i_ja [..., i, j, a]
    T_vhh: np.ndarray  # T^a_ji [..., a, j, i]
    T_vvh: np.ndarray  # T^a_bi [..., a, b, i]
    T_vvv: np.ndarray  # T^a_bc [..., a, b, c]


@dataclass(frozen=True)
class CurvatureBlocks:
    R_hhhh: np.ndarray  # R^i_hjk
    R_vvhh: np.ndarray  # R^a_bjk
    R_hhhv: np.ndarray  # R^i_jka
    R_vvhv: np.ndarray  # R^c_bka
    R_hhvv: np.ndarray  # R^i_jbc
    R_vvvv: np.ndarray  # R^a_bcd


@dataclass(frozen=True)
class RicciBlocks:
    R_ij: np.ndarray
    R_ia: np.ndarray
    R_ai: np.ndarray
    R_ab: np.ndarray
    R: np.ndarray | None = None
    S: np.ndarray | None = None

    def full(self) -> np.ndarray:
        n = self.R_ij.shape[-1]
        m = self.R_ab.shape[-1]
        out = np.zeros(self.R_ij.shape[:-2] + (n + m, n + m))
        out[..., :n, :n] = self.R_ij
        out[..., :n, n:] = self.R_ia
        out[..., n:, :n] = self.R_ai
        out[..., n:, n:] = self.R_ab
        return out


@dataclass(frozen=True)
class DistortionBlocks:
    """Distortion ``Z`` (same layout as a full connection) and ``Gamma_hat + Z``."""

    n: int
    Z: np.ndarray
    levi_civita: np.ndarray

    def block(self, upper: str, lower1: str, lower2: str) -> np.ndarray:
        """Sub-block by h/v labels, e.g. ``block("v", "h", "h")`` is ``Z^a_jk``."""
        sl = {"h": slice(0, self.n), "v": slice(self.n, None)}
        return self.Z[..., sl[upper], sl[lower1], sl[lower2]]


# --------------------------------------------------------------------------


@dataclass(frozen=True)
class _Ingredients:
    gh: np.ndarray
    gv: np.ndarray
    ghi: np.ndarray
    gvi: np.ndarray
    egh: np.ndarray  # [..., j, r, beta] = e_beta g_jr
    egv: np.ndarray  # [..., b, c, beta] = e_beta g_bc
    dvN: np.ndarray  # [..., k, d, b] = d_b N_k^d


def _ingredients(g: DMetric, N: NConnectionField, order: FractionalOrder) -> _Ingredients:
    ghi, gvi = g.inverses()
    return _Ingredients(
        gh=g.h, gv=g.v, ghi=ghi, gvi=gvi,
        egh=frame_derivatives(g.h, N, order),
        egv=frame_derivatives(g.v, N, order),
        dvN=vertical_partials_of_N(N, order),
    )


def canonical_dconnection(g: DMetric, N: NConnectionField, order: FractionalOrder | float) -> DConnectionCoeffs:
    """Unique metric-compatible d-connection with vanishing pure h and v torsion."""
    chart = _require_chart(g, N)
    order = as_order(order)
    n = chart.n
    I = _ingredients(g, N, order)
    eh_gh = I.egh[..., :n]  # [j, r, k] = e_k g_jr
    ev_gh = I.egh[..., n:]  # [j, r, c] = e_c g_jr
    eh_gv = I.egv[..., :n]  # [b, c, k] = e_k g_bc
    ev_gv = I.egv[..., n:]  # [b, c, d] = e_d g_bc

    s = -1.0 if "candcon-sign" in _FAULTS else 1.0
    # L^i_jk = 1/2 g^ir (e_k g_jr + e_j g_kr - e_r g_jk)
    t = np.einsum("...jrk->...jkr", eh_gh) + s * np.einsum("...krj->...jkr", eh_gh) - eh_gh
    L_h = 0.5 * np.einsum("...ir,...jkr->...ijk", I.ghi, t)

    # L^a_bk = d_b N_k^a + 1/2 g^ac (e_k g_bc - g_dc d_b N_k^d - g_db d_c N_k^d)
    inner = (eh_gv
             - np.einsum("...dc,...kdb->...bck", I.gv, I.dvN)
             - np.einsum("...db,...kdc->...bck", I.gv, I.dvN))
    L_v = np.einsum("...kab->...abk", I.dvN) + 0.5 * np.einsum("...ac,...bck->...abk", I.gvi, inner)

    # C^i_jc = 1/2 g^ik e_c g_jk
    C_h = 0.5 * np.einsum("...ik,...jkc->...ijc", I.ghi, ev_gh)

    # C^a_bc = 1/2 g^ad (e_c g_bd + e_b g_cd - e_d g_bc)
    u = (np.einsum("...bdc->...bcd", ev_gv) + np.einsum("...cdb->...bcd", ev_gv) - ev_gv)
    C_v = 0.5 * np.einsum("...ad,...bcd->...abc", I.gvi, u)
    return DConnectionCoeffs(chart, L_h, L_v, C_h, C_v)


def dtorsion(gamma: DConnectionCoeffs, N: NConnectionField, order: FractionalOrder | float) -> TorsionBlocks:
    """The five torsion blocks of a d-connection."""
    _require_chart(gamma, N)
    order = as_order(order)
    anh = anholonomy(N, order)
    dvN = vertical_partials_of_N(N, order)  # [i, a, b] = d_b N_i^a
    return TorsionBlocks(
        T_hhh=gamma.L_h - np.swapaxes(gamma.L_h, -1, -2),
        T_hhv=gamma.C_h.copy(),
        T_vhh=np.einsum("...jia->...aji", anh.omega),
        T_vvh=np.einsum("...iab->...abi", dvN) - gamma.L_v,
        T_vvv=gamma.C_v - np.swapaxes(gamma.C_v, -1, -2),
    )


def generic_curvature(gamma_full: np.ndarray, N: NConnectionField, order: FractionalOrder | float,
                      W: np.ndarray | None = None) -> np.ndarray:
    """Curvature of any frame connection.

    Returns ``Rg[..., alpha, beta, gamma, delta]`` with
    ``R(e_gamma, e_delta) e_beta = Rg^alpha_{beta gamma delta} e_alpha``.
    """
    order = as_order(order)
    if W is None:
        W = anholonomy(N, order).W
    eG = frame_derivatives(gamma_full, N, order)  # [a, b, d, g] = e_g Gamma^a_bd
    G = gamma_full
    R = (np.einsum("...abdg->...abgd", eG) - eG
         + np.einsum("...mbd,...amg->...abgd", G, G)
         - np.einsum("...mbg,...amd->...abgd", G, G)
         - np.einsum("...mgd,...abm->...abgd", W, G))
    return R


def dcurvature(gamma: DConnectionCoeffs, N: NConnectionField, g: DMetric | None,
               order: FractionalOrder | float) -> CurvatureBlocks:
    """The six curvature blocks of a d-connection, written out block by block."""
    chart = _require_chart(gamma, N)
    order = as_order(order)
    n = chart.n
    anh = anholonomy(N, order)
    om = anh.omega  # [i, j, a] = Omega^a_ij
    dvN = vertical_partials_of_N(N, order)  # [k, d, a] = d_a N_k^d
    Lh, Lv, Ch, Cv = gamma.L_h, gamma.L_v, gamma.C_h, gamma.C_v
    eLh = frame_derivatives(Lh, N, order)  # [i, h, j, beta]
    eLv = frame_derivatives(Lv, N, order)
    eCh = frame_derivatives(Ch, N, order)
    eCv = frame_derivatives(Cv, N, order)
    ein = np.einsum

    # R^i_hjk = e_k L^i_hj - e_j L^i_hk + L^m_hj L^i_mk - L^m_hk L^i_mj - C^i_ha Omega^a_kj
    R_hhhh = (eLh[..., :n] - ein("...ihkj->...ihjk", eLh[..., :n])
              + ein("...mhj,...imk->...ihjk", Lh, Lh) - ein("...mhk,...imj->...ihjk", Lh, Lh)
              - ein("...iha,...kja->...ihjk", Ch, om))
    R_vvhh = (eLv[..., :n] - ein("...bakj->...bajk", eLv[..., :n])
              + ein("...cbj,...ack->...abjk", Lv, Lv) - ein("...cbk,...acj->...abjk", Lv, Lv)
              - ein("...abc,...kjc->...abjk", Cv, om))

    # tors[k, b, a] = d_a N_k^b - L^b_ak   (the T^b_ak block)
    tors = dvN - ein("...bak->...kba", Lv)
    # D_k C^i_ja = e_k C^i_ja + L^i_mk C^m_ja - L^m_jk C^i_ma - L^b_ak C^i_jb
    DC_h = (ein("...ijak->...ijka", eCh[..., :n])
            + ein("...imk,...mja->...ijka", Lh, Ch)
            - ein("...mjk,...ima->...ijka", Lh, Ch)
            - ein("...bak,...ijb->...ijka", Lv, Ch))
    # R^i_jka = e_a L^i_jk - D_k C^i_ja + C^i_jb T^b_ka
    R_hhhv = eLh[..., n:] - DC_h + ein("...ijb,...kba->...ijka", Ch, tors)
    DC_v = (ein("...cbak->...cbka", eCv[..., :n])
            + ein("...cdk,...dba->...cbka", Lv, Cv)
            - ein("...dbk,...cda->...cbka", Lv, Cv)
            - ein("...dak,...cbd->...cbka", Lv, Cv))
    R_vvhv = eLv[..., n:] - DC_v + ein("...cbd,...kda->...cbka", Cv, tors)

    # R^i_jbc = e_c C^i_jb - e_b C^i_jc + C^h_jb C^i_hc - C^h_jc C^i_hb
    R_hhvv = (eCh[..., n:] - ein("...ijcb->...ijbc", eCh[..., n:])
              + ein("...hjb,...ihc->...ijbc", Ch, Ch) - ein("...hjc,...ihb->...ijbc", Ch, Ch))
    R_vvvv = (eCv[..., n:] - ein("...abdc->...abcd", eCv[..., n:])
              + ein("...ebc,...aed->...abcd", Cv, Cv) - ein("...ebd,...aec->...abcd", Cv, Cv))
    return CurvatureBlocks(R_hhhh, R_vvhh, R_hhhv, R_vvhv, R_hhvv, R_vvvv)


def ricci_contract(R: CurvatureBlocks) -> RicciBlocks:
    """``R_ij = R^k_ijk``, ``R_ia = -R^k_ika``, ``R_ai = R^b_aib``, ``R_ab = R^c_abc``."""
    return RicciBlocks(
        R_ij=np.einsum("...kijk->...ij", R.R_hhhh),
        R_ia=-np.einsum("...kika->...ia", R.R_hhhv),
        R_ai=np.einsum("...baib->...ai", R.R_vvhv),
        R_ab=np.einsum("...cabc->...ab", R.R_vvvv),
    )


def ricci_from_generic(Rg: np.ndarray, n: int) -> RicciBlocks:
    """Contract a generic curvature array: ``Ric[beta, delta] = Rg^alpha_{beta alpha delta}``."""
    ric = np.einsum("...abad->...bd", Rg)
    return RicciBlocks(ric[..., :n, :n], ric[..., :n, n:], ric[..., n:, :n], ric[..., n:, n:])


def scalar_curvature(g: DMetric, ric: RicciBlocks) -> tuple[np.ndarray, np.ndarray]:
    ghi, gvi = g.inverses()
    return np.einsum("...ij,...ij->...", ghi, ric.R_ij), np.einsum("...ab,...ab->...", gvi, ric.R_ab)


def einstein_tensor(g: DMetric, ric: RicciBlocks, scalars: tuple[np.ndarray, np.ndarray]) -> RicciBlocks:
    """Blockwise ``G = Ric - 1/2 g (R + S)``; mixed blocks carry no metric term."""
    sR = (scalars[0] + scalars[1])[..., None, None]
    return RicciBlocks(
        R_ij=ric.R_ij - 0.5 * g.h * sR,
        R_ia=ric.R_ia.copy(),
        R_ai=ric.R_ai.copy(),
        R_ab=ric.R_ab - 0.5 * g.v * sR,
    )


def levi_civita_distortion(g: DMetric, N: NConnectionField, order: FractionalOrder | float,
                           gamma: DConnectionCoeffs | None = None) -> DistortionBlocks:
    """Distortion ``Z`` with ``nabla = D_hat + Z`` for the canonical ``D_hat``."""
    chart = _require_chart(g, N)
    order = as_order(order)
    n, d = chart.n, chart.dim
    if gamma is None:
        gamma = canonical_dconnection(g, N, order)
    ghi, gvi = g.inverses()
    om = anholonomy(N, order).omega  # [j, k, a] = Omega^a_jk
    dvN = vertical_partials_of_N(N, order)  # [j, a, b] = d_b N_j^a
    ein = np.einsum
    # K^a_bj = L^a_bj - d_b N_j^a, stored [a, b, j]
    K = gamma.L_v - ein("...jab->...abj", dvN)

    Z = np.zeros(chart.shape + (d, d, d))
    # Z^a_jk = -C^i_jb g_ik g^ab - 1/2 Omega^a_jk
    Z[..., n:, :n, :n] = (-ein("...ijb,...ik,...ab->...ajk", gamma.C_h, g.h, gvi)
                          - 0.5 * ein("...jka->...ajk", om))
    # Z^i_bk = C^i_kb + 1/2 g^ij g_cb Omega^c_jk
    half_om = 0.5 * ein("...ij,...cb,...jkc->...ibk", ghi, g.v, om)
    Z[..., :n, n:, :n] = ein("...ikb->...ibk", gamma.C_h) + half_om
    # Z^i_kb = 1/2 g^ij g_cb Omega^c_jk   (nabla_{e_b} e_k)
    Z[..., :n, :n, n:] = ein("...ibk->...ikb", half_om)
    # Z^a_jb = L^a_bj - d_b N_j^a   (nabla_{e_b} e_j)
    Z[..., n:, :n, n:] = ein("...abj->...ajb", K)
    # Z^i_ab = -1/2 g^ij (K^c_aj g_cb + K^c_bj g_ca)   (nabla_{e_b} e_a)
    Z[..., :n, n:, n:] = -0.5 * (ein("...ij,...caj,...cb->...iab", ghi, K, g.v)
                                 + ein("...ij,...cbj,...ca->...iab", ghi, K, g.v))
    return DistortionBlocks(n=n, Z=Z, levi_civita=gamma.full() + Z)


def metricity_residual(gamma: DConnectionCoeffs, g: DMetric, N: NConnectionField,
                       order: FractionalOrder | float) -> float:
    """Max over nodes of the four covariant derivatives of the metric blocks."""
    chart = _require_chart(gamma, g, N)
    order = as_order(order)
    n = chart.n
    egh = frame_derivatives(g.h, N, order)
    egv = frame_derivatives(g.v, N, order)
    ein = np.einsum
    r1 = egh[..., :n] - ein("...mik,...mj->...ijk", gamma.L_h, g.h) - ein("...mjk,...im->...ijk", gamma.L_h, g.h)
    r2 = egv[..., :n] - ein("...cak,...cb->...abk", gamma.L_v, g.v) - ein("...cbk,...ac->...abk", gamma.L_v, g.v)
    r3 = egh[..., n:] - ein("...mic,...mj->...ijc", gamma.C_h, g.h) - ein("...mjc,...im->...ijc", gamma.C_h, g.h)
    r4 = egv[..., n:] - ein("...dac,...db->...abc", gamma.C_v, g.v) - ein("...dbc,...ad->...abc", gamma.C_v, g.v)
    return float(max(np.max(np.abs(r)) for r in (r1, r2, r3, r4)))


@dataclass(frozen=True)
class Geometry:
    """Bundle of everything derived from ``(g, N)`` at a given order."""

    gamma: DConnectionCoeffs
    ricci: RicciBlocks  # with R and S filled in
    ghi: np.ndarray
    gvi: np.ndarray


def canonical_geometry(g: DMetric, N: NConnectionField, order: FractionalOrder | float) -> Geometry:
    gamma = canonical_dconnection(g, N, order)
    ric = ricci_contract(dcurvature(gamma, N, g, order))
    R, S = scalar_curvature(g, ric)
    ghi, gvi = g.inverses()
    return Geometry(gamma, RicciBlocks(ric.R_ij, ric.R_ia, ric.R_ai, ric.R_ab, R, S), ghi, gvi)
