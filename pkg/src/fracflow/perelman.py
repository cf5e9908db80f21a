"""Fractional volume integration, Perelman-type functionals and thermodynamic values.

Every integral here uses one :class:`VolumeElement`: per-axis fractional
quadrature weights times the density ``sqrt|det g_ij| * sqrt|det g_ab|``.
All derivative terms use the canonical d-connection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .connection import Geometry, canonical_geometry
from .fraccalc import FractionalOrder, as_order, quadrature_weights
from .geometry import DMetric, NConnectionField, frame_derivatives


@dataclass(frozen=True)
class VolumeElement:
    chart: object
    density: np.ndarray
    weights: tuple[np.ndarray, ...]

    def integrate(self, field: np.ndarray) -> float:
        out = np.asarray(field, dtype=float) * self.density
        for w in reversed(self.weights):
            out = out @ w
        return float(out)

    @property
    def total(self) -> float:
        return self.integrate(np.ones(self.chart.shape))


def volume_element(g: DMetric, order: FractionalOrder | float) -> VolumeElement:
    dens = np.sqrt(np.abs(np.linalg.det(g.h))) * np.sqrt(np.abs(np.linalg.det(g.v)))
    if not np.all(dens > 0):
        from .errors import DegenerateMetric

        raise DegenerateMetric("degenerate metric: zero volume density")
    weights = tuple(quadrature_weights(ax, order) for ax in g.chart.axes)
    return VolumeElement(g.chart, dens, weights)


def fractional_volume_integral(field: np.ndarray, g: DMetric, order: FractionalOrder | float) -> float:
    return volume_element(g, order).integrate(field)


# --------------------------------------------------------------------------
# derivative terms of the potential


@dataclass(frozen=True)
class PotentialTerms:
    """First and second adapted derivatives of a scalar potential."""

    ef: np.ndarray  # [..., beta] = e_beta f
    hDf2: np.ndarray  # g^jk e_j f e_k f
    vDf2: np.ndarray  # g^bc e_b f e_c f
    hess_h: np.ndarray  # H_ij = e_i e_j f - L^k_ji e_k f
    hess_v: np.ndarray  # H_ab = e_a e_b f - C^c_ba e_c f
    lap_h: np.ndarray
    lap_v: np.ndarray

    @property
    def Df2(self) -> np.ndarray:
        return self.hDf2 + self.vDf2

    @property
    def laplacian(self) -> np.ndarray:
        return self.lap_h + self.lap_v


def potential_terms(f: np.ndarray, N: NConnectionField, geo: Geometry, order: FractionalOrder | float) -> PotentialTerms:
    order = as_order(order)
    n = N.chart.n
    ef = frame_derivatives(f, N, order)
    eef = frame_derivatives(ef, N, order)  # [..., b, g] = e_g e_b f
    efh, efv = ef[..., :n], ef[..., n:]
    hess_h = np.swapaxes(eef[..., :n, :n], -1, -2) - np.einsum("...kji,...k->...ij", geo.gamma.L_h, efh)
    hess_v = np.swapaxes(eef[..., n:, n:], -1, -2) - np.einsum("...cba,...c->...ab", geo.gamma.C_v, efv)
    return PotentialTerms(
        ef=ef,
        hDf2=np.einsum("...jk,...j,...k->...", geo.ghi, efh, efh),
        vDf2=np.einsum("...bc,...b,...c->...", geo.gvi, efv, efv),
        hess_h=hess_h,
        hess_v=hess_v,
        lap_h=np.einsum("...ij,...ij->...", geo.ghi, hess_h),
        lap_v=np.einsum("...ab,...ab->...", geo.gvi, hess_v),
    )


def _sq(T: np.ndarray, ginv: np.ndarray) -> np.ndarray:
    """``g^ik g^jl T_ij T_kl`` per node."""
    return np.einsum("...ik,...jl,...ij,...kl->...", ginv, ginv, T, T)


def mu_density(f: np.ndarray, tau: float, dim: int) -> np.ndarray:
    return (4.0 * np.pi * tau) ** (-0.5 * dim) * np.exp(-f)


# --------------------------------------------------------------------------
# functionals


@dataclass(frozen=True)
class Snapshot:
    """Everything the functionals need at one instant of a flow."""

    g: DMetric
    N: NConnectionField
    f: np.ndarray
    tau: float
    order: FractionalOrder
    geo: Geometry
    terms: PotentialTerms
    vol: VolumeElement

    @property
    def dim(self) -> int:
        return self.g.chart.dim


def snapshot(g: DMetric, N: NConnectionField, f: np.ndarray, tau: float = 1.0,
             order: FractionalOrder | float = 1.0, geo: Geometry | None = None) -> Snapshot:
    order = as_order(order)
    if geo is None:
        geo = canonical_geometry(g, N, order)
    f = np.asarray(f, dtype=float)
    return Snapshot(g, N, f, float(tau), order, geo, potential_terms(f, N, geo, order), volume_element(g, order))


def mu_mass(s: Snapshot) -> float:
    return s.vol.integrate(mu_density(s.f, s.tau, s.dim))


def normalize_potential(s: Snapshot) -> np.ndarray:
    """Shift ``f`` by a constant so that the mu-mass equals 1."""
    mass = mu_mass(s)
    if not np.isfinite(mass) or mass <= 0:
        raise FloatingPointError(f"non-finite mu-mass {mass!r}")
    return s.f + np.log(mass)


def functional_F(s: Snapshot) -> float:
    R, S = s.geo.ricci.R, s.geo.ricci.S
    return s.vol.integrate((R + S + s.terms.Df2) * np.exp(-s.f))


def functional_W(s: Snapshot, norm_squared: bool = False) -> float:
    """W-functional.

    By default the bracket is ``tau (R + S + |hDf| + |vDf|)^2`` with block norms
    (square roots).  ``norm_squared=True`` uses ``tau (R + S + |hDf|^2 + |vDf|^2)``
    instead, which is the classical entropy integrand.
    """
    R, S = s.geo.ricci.R, s.geo.ricci.S
    t = s.terms
    if norm_squared:
        core = s.tau * (R + S + t.hDf2 + t.vDf2)
    else:
        core = s.tau * (R + S + np.sqrt(np.maximum(t.hDf2, 0)) + np.sqrt(np.maximum(t.vDf2, 0))) ** 2
    integrand = (core + s.f - 0.5 * s.dim) * mu_density(s.f, s.tau, s.dim)
    return s.vol.integrate(integrand)


def first_variation_F(s: Snapshot, v_h: np.ndarray, v_v: np.ndarray, f_h: np.ndarray, f_v: np.ndarray,
                      printed: bool = False) -> float:
    """First variation of ``F`` along ``g -> g + eps v``, ``f -> f + eps (f_h + f_v)``.

    The default integrand is the classical one,
    ``-v_ij (R_ij + H_ij) - v_ab (R_ab + H_ab) + (v/2 - df)(2 Lap f - |Df|^2 + R + S)``
    with ``v = g^ij v_ij + g^ab v_ab`` and ``df = f_h + f_v``.
    ``printed=True`` instead evaluates the block-split form with unsquared
    block norms and with ``R`` and ``S`` added outside the products; that form
    is kept for comparison only and does not match finite differences of ``F``.
    """
    ric, t, geo = s.geo.ricci, s.terms, s.geo
    hv = np.einsum("...ij,...ij->...", geo.ghi, v_h)
    vv = np.einsum("...ab,...ab->...", geo.gvi, v_v)
    rh = np.einsum("...ik,...jl,...ij,...kl->...", geo.ghi, geo.ghi, v_h, ric.R_ij + t.hess_h)
    rv = np.einsum("...ac,...bd,...ab,...cd->...", geo.gvi, geo.gvi, v_v, ric.R_ab + t.hess_v)
    if printed:
        integrand = (-rh + (0.5 * hv - f_h) * (2 * t.lap_h - np.sqrt(np.maximum(t.hDf2, 0))) + ric.R
                     - rv + (0.5 * vv - f_v) * (2 * t.lap_v - np.sqrt(np.maximum(t.vDf2, 0))) + ric.S)
    else:
        integrand = -rh - rv + (0.5 * (hv + vv) - f_h - f_v) * (2 * t.laplacian - t.Df2 + ric.R + ric.S)
    return s.vol.integrate(integrand * np.exp(-s.f))


def dF_dchi_integral(s: Snapshot) -> float:
    ric, t, geo = s.geo.ricci, s.terms, s.geo
    integrand = _sq(ric.R_ij + t.hess_h, geo.ghi) + _sq(ric.R_ab + t.hess_v, geo.gvi)
    return 2.0 * s.vol.integrate(integrand * np.exp(-s.f))


def dW_dchi_integral(s: Snapshot) -> float:
    if s.tau <= 0:
        raise ValueError("tau must be positive")
    ric, t, geo = s.geo.ricci, s.terms, s.geo
    c = 0.5 / s.tau
    integrand = (_sq(ric.R_ij + t.hess_h - c * s.g.h, geo.ghi)
                 + _sq(ric.R_ab + t.hess_v - c * s.g.v, geo.gvi))
    return 2.0 * s.tau * s.vol.integrate(integrand * mu_density(s.f, s.tau, s.dim))


@dataclass(frozen=True)
class ThermoRecord:
    energy: float
    entropy: float
    sigma: float
    log_z: float


def thermodynamics(s: Snapshot) -> ThermoRecord:
    """Energy, entropy, fluctuation and log-partition integrals with the canonical connection."""
    if s.tau <= 0:
        raise ValueError("tau must be positive")
    ric, t, geo = s.geo.ricci, s.terms, s.geo
    mu = mu_density(s.f, s.tau, s.dim)
    half = 0.5 * s.dim
    base = ric.R + ric.S + t.hDf2 + t.vDf2
    energy = -s.tau**2 * s.vol.integrate((base - half / s.tau) * mu)
    entropy = -s.vol.integrate((s.tau * base + s.f - half) * mu)
    c = 0.5 / s.tau
    squares = (_sq(ric.R_ij + t.hess_h - c * s.g.h, geo.ghi)
               + _sq(ric.R_ab + t.hess_v - c * s.g.v, geo.gvi))
    sigma = 2.0 * s.tau**4 * s.vol.integrate(squares * mu)
    log_z = s.vol.integrate((-s.f + half) * mu)
    return ThermoRecord(energy, entropy, sigma, log_z)
