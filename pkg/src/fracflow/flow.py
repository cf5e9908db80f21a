"""Fractional Ricci flow of d-metrics with a Caputo derivative in the flow parameter.

The evolving unknowns are the metric blocks ``g_ij`` and ``g_ab`` (and, when
enabled, the mixed products ``P_ja = N_j^e g_ae``), the potential ``f`` and
``tau``.  They are packed into one vector and advanced with a product
integration predictor-corrector that keeps the full history.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.special import gamma as Gamma

from .connection import (
    Geometry,
    RicciBlocks,
    canonical_geometry,
    generic_curvature,
    levi_civita_distortion,
    ricci_from_generic,
    scalar_curvature,
)
from .errors import DegenerateMetric, FlowSingularity
from .fraccalc import FractionalOrder, as_order
from .geometry import DMetric, GridChart, NConnectionField, push_covariant, safe_inverse, vielbein
from . import perelman

MODES = ("canonical", "levi-civita")
NORMALIZATIONS = ("none", "fixed", "dimension")
POTENTIALS = ("off", "F", "W")


@dataclass(frozen=True)
class FlowConfig:
    alpha: float = 1.0
    step: float = 1e-3
    steps: int = 10
    mode: str = "canonical"
    normalization: str = "none"
    potential: str = "off"
    evolve_n: bool = False
    w_norm_squared: bool = False
    max_extent: float = 10.0  # runtime guard on step * steps

    def __post_init__(self):
        as_order(self.alpha)
        if not self.step > 0:
            raise ValueError("step must be positive")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError("steps must be a positive integer")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"normalization must be one of {NORMALIZATIONS}")
        if self.potential not in POTENTIALS:
            raise ValueError(f"potential must be one of {POTENTIALS}")
        if self.step * self.steps > self.max_extent:
            raise ValueError("step * steps exceeds the configured flow extent guard")

    @property
    def order(self) -> FractionalOrder:
        return as_order(self.alpha)


@dataclass(frozen=True)
class FlowState:
    chart: GridChart
    metric: DMetric
    nconn: NConnectionField
    f: np.ndarray
    tau: float = 1.0
    chi: float = 0.0

    def snapshot(self, order, geo: Geometry | None = None) -> perelman.Snapshot:
        return perelman.snapshot(self.metric, self.nconn, self.f, self.tau, order, geo)


@dataclass
class FlowHistory:
    """Flow parameters, packed states and right-hand sides, in step order."""

    chi: list[float] = field(default_factory=list)
    states: list[FlowState] = field(default_factory=list)
    packed: list[np.ndarray] = field(default_factory=list)
    rhs: list[np.ndarray] = field(default_factory=list)

    def append(self, state: FlowState, packed: np.ndarray, rhs: np.ndarray | None) -> None:
        if self.chi and state.chi <= self.chi[-1]:
            raise ValueError("flow parameter must increase strictly")
        self.chi.append(state.chi)
        self.states.append(state)
        self.packed.append(packed)
        if rhs is not None:
            self.rhs.append(rhs)

    def state_at(self, chi: float) -> FlowState:
        idx = int(np.argmin(np.abs(np.asarray(self.chi) - chi)))
        if abs(self.chi[idx] - chi) > 1e-9 * max(1.0, abs(chi)):
            raise ValueError(f"chi={chi} is not a recorded flow parameter")
        return self.states[idx]


# --------------------------------------------------------------------------
# right-hand sides


def _sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def _coordinate_ricci(ric: RicciBlocks, N: NConnectionField) -> np.ndarray:
    return push_covariant(ric.full(), vielbein(N))


def normalization_lambda(state: FlowState, mode: str, scalars: tuple[np.ndarray, np.ndarray],
                         order: FractionalOrder | float) -> float:
    """``lambda`` from the mean curvature ``r = int (R + S) dV / int dV``.

    ``"fixed"`` uses ``r / 5`` regardless of the chart, ``"dimension"`` uses
    ``r / (n + m)`` and ``"none"`` returns 0.
    """
    if mode == "none":
        return 0.0
    vol = perelman.volume_element(state.metric, order)
    total = vol.total
    if not total > 0:
        raise ValueError("zero volume")
    r = vol.integrate(scalars[0] + scalars[1]) / total
    if mode == "fixed":
        return r / 5.0
    if mode == "dimension":
        return r / state.chart.dim
    raise ValueError(f"unknown normalization {mode!r}")


def _nn_history_term(history: FlowHistory | None, state: FlowState, order: FractionalOrder, step: float) -> np.ndarray:
    """``g_cd D_chi^alpha (N_i^c N_j^d)`` from the sampled history (lagged by one node)."""
    n, m = state.chart.n, state.chart.m
    out = np.zeros(state.chart.shape + (n, n))
    if history is None or len(history.states) < 2:
        return out
    prods = [np.einsum("...ic,...jd->...ijcd", s.nconn.coefficients, s.nconn.coefficients) for s in history.states]
    k = len(prods) - 1
    a = order.alpha
    if a == 1.0:
        d = (prods[k] - prods[k - 1]) / step
    else:
        j = np.arange(k, dtype=float)
        b = (j + 1.0) ** (1.0 - a) - j ** (1.0 - a)
        d = sum(b[k - 1 - i] * (prods[i + 1] - prods[i]) for i in range(k))
        d = d * step ** (-a) / Gamma(2.0 - a)
    return np.einsum("...cd,...ijcd->...ij", state.metric.v, d)


@dataclass(frozen=True)
class RHS:
    h: np.ndarray
    v: np.ndarray
    p: np.ndarray | None
    lam: float
    residual: float


def hamilton_rhs_canonical(state: FlowState, config: FlowConfig, geo: Geometry | None = None,
                           history: FlowHistory | None = None) -> RHS:
    """Evolution of the metric blocks driven by the canonical Ricci tensor."""
    order = config.order
    if geo is None:
        geo = canonical_geometry(state.metric, state.nconn, order)
    ric = geo.ricci
    lam = normalization_lambda(state, config.normalization, (ric.R, ric.S), order)
    return _blocks_rhs(state, config, _coordinate_ricci(ric, state.nconn), lam, history,
                       residual=_constraint_residual(ric, state.chart, order))


def levi_civita_ricci(state: FlowState, order: FractionalOrder | float, geo: Geometry | None = None) -> RicciBlocks:
    """Ricci blocks (adapted frame) of the Levi-Civita connection obtained by distortion."""
    order = as_order(order)
    gamma = geo.gamma if geo is not None else None
    dist = levi_civita_distortion(state.metric, state.nconn, order, gamma)
    ric = ricci_from_generic(generic_curvature(dist.levi_civita, state.nconn, order), state.chart.n)
    R, S = scalar_curvature(state.metric, ric)
    return RicciBlocks(ric.R_ij, ric.R_ia, ric.R_ai, ric.R_ab, R, S)


def hamilton_rhs_lc(state: FlowState, config: FlowConfig, geo: Geometry | None = None,
                    history: FlowHistory | None = None) -> RHS:
    """Evolution driven by the Levi-Civita Ricci tensor in the coordinate frame."""
    order = config.order
    ric = levi_civita_ricci(state, order, geo)
    lam = normalization_lambda(state, config.normalization, (ric.R, ric.S), order)
    return _blocks_rhs(state, config, _coordinate_ricci(ric, state.nconn), lam, history, residual=0.0)


def _constraint_residual(ric: RicciBlocks, chart: GridChart, order: FractionalOrder) -> float:
    sl = chart.interior(order.alpha)
    return float(max(np.max(np.abs(ric.R_ia[sl]), initial=0.0), np.max(np.abs(ric.R_ai[sl]), initial=0.0)))


def _blocks_rhs(state: FlowState, config: FlowConfig, Rc: np.ndarray, lam: float,
                history: FlowHistory | None, residual: float) -> RHS:
    n = state.chart.n
    g = state.metric
    Nc = state.nconn.coefficients
    R_ij, R_ab, R_ja = Rc[..., :n, :n], Rc[..., n:, n:], Rc[..., :n, n:]
    rhs_v = -2.0 * (R_ab - lam * g.v)
    rhs_h = 2.0 * (np.einsum("...ia,...jb,...ab->...ij", Nc, Nc, R_ab - lam * g.v) - R_ij + lam * g.h)
    if config.evolve_n:
        rhs_h = rhs_h - _nn_history_term(history, state, config.order, config.step)
    p = None
    if config.evolve_n:
        p = -2.0 * R_ja + 2.0 * lam * np.einsum("...je,...ae->...ja", Nc, g.v)
    return RHS(_sym(rhs_h), _sym(rhs_v), p, lam, residual)


def coupled_potential_rhs(state: FlowState, config: FlowConfig, geo: Geometry | None = None,
                          terms: perelman.PotentialTerms | None = None) -> np.ndarray:
    """``-Lap f + |Df|^2 - R - S``, plus ``(n + m) / (2 tau)`` when the W-flow is active."""
    order = config.order
    if geo is None:
        geo = canonical_geometry(state.metric, state.nconn, order)
    if terms is None:
        terms = perelman.potential_terms(state.f, state.nconn, geo, order)
    out = -terms.laplacian + terms.Df2 - geo.ricci.R - geo.ricci.S
    if config.potential == "W":
        out = out + state.chart.dim / (2.0 * state.tau)
    return out


# --------------------------------------------------------------------------
# packing


def _pack(state: FlowState, evolve_n: bool) -> np.ndarray:
    parts = [state.metric.h.ravel(), state.metric.v.ravel()]
    if evolve_n:
        parts.append(np.einsum("...je,...ae->...ja", state.nconn.coefficients, state.metric.v).ravel())
    parts.append(state.f.ravel())
    parts.append(np.array([state.tau]))
    return np.concatenate(parts)


def _unpack(u: np.ndarray, template: FlowState, evolve_n: bool, chi: float) -> FlowState:
    chart = template.chart
    n, m = chart.n, chart.m
    size = int(np.prod(chart.shape))
    pos = 0

    def take(shape):
        nonlocal pos
        count = int(np.prod(shape))
        out = u[pos:pos + count].reshape(shape)
        pos += count
        return out

    h = _sym(take(chart.shape + (n, n)))
    v = _sym(take(chart.shape + (m, m)))
    N = template.nconn
    if evolve_n:
        P = take(chart.shape + (n, m))
        if not np.all(np.isfinite(v)):
            raise DegenerateMetric("non-finite vertical metric")
        N = NConnectionField(chart, np.einsum("...ja,...ae->...je", P, safe_inverse(v, "vertical")))
    f = take(chart.shape).copy()
    tau = float(u[pos])
    assert pos + 1 == u.size and size > 0
    return FlowState(chart, DMetric(chart, h, v), N, f, tau, chi)


def _check_state(state: FlowState) -> None:
    for block, label in ((state.metric.h, "horizontal"), (state.metric.v, "vertical")):
        if not np.all(np.isfinite(block)):
            raise DegenerateMetric(f"non-finite {label} metric")
        if np.linalg.eigvalsh(block).min() <= 0:
            raise DegenerateMetric(f"{label} metric lost positive definiteness")
    state.metric.inverses()
    if not np.all(np.isfinite(state.f)):
        raise DegenerateMetric("non-finite potential")
    if not state.tau > 0:
        raise DegenerateMetric("tau reached zero")


# --------------------------------------------------------------------------
# time stepping


def step_caputo_ivp(history: FlowHistory, rhs: Callable[[np.ndarray], np.ndarray], alpha: float,
                    step: float, f_last: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """One step of ``D_chi^alpha u = F(u)`` with full-history product integration.

    ``history.packed`` holds ``u_0..u_k`` and ``history.rhs`` holds
    ``F(u_0)..F(u_k)``.  For ``alpha < 1`` a fractional rectangle predictor is
    followed by a fractional trapezoid corrector.  At ``alpha == 1`` this is
    Heun's method.  Returns ``(u_{k+1}, F(predictor))``.
    """
    us, Fs = history.packed, history.rhs
    k = len(us) - 1
    if k < 0 or len(Fs) != k + 1:
        raise ValueError("history must hold matching states and right-hand sides")
    a = float(alpha)
    if a == 1.0:
        pred = us[k] + step * Fs[k]
        Fp = rhs(pred)
        return us[k] + 0.5 * step * (Fs[k] + Fp), Fp
    j = np.arange(k + 1, dtype=float)
    b = (k + 1.0 - j) ** a - (k - j) ** a
    Fmat = np.stack(Fs)
    pred = us[0] + step**a / Gamma(a + 1.0) * np.tensordot(b, Fmat, axes=1)
    Fp = rhs(pred)
    w = np.empty(k + 1)
    w[0] = k ** (a + 1.0) - (k - a) * (k + 1.0) ** a
    if k >= 1:
        jj = j[1:]
        w[1:] = (k - jj + 2.0) ** (a + 1.0) + (k - jj) ** (a + 1.0) - 2.0 * (k - jj + 1.0) ** (a + 1.0)
    corr = us[0] + step**a / Gamma(a + 2.0) * (Fp + np.tensordot(w, Fmat, axes=1))
    return corr, Fp


def solve_scalar_ivp(func: Callable[[float, float], float], u0: float, alpha: float, step: float,
                     steps: int) -> np.ndarray:
    """Solve ``D_chi^alpha u = func(chi, u)`` from ``u(0) = u0``; returns ``u`` at every node."""
    hist = FlowHistory()
    hist.packed.append(np.array([u0], dtype=float))
    hist.rhs.append(np.array([func(0.0, u0)], dtype=float))
    for k in range(1, steps + 1):
        chi = k * step
        u, _ = step_caputo_ivp(hist, lambda x: np.array([func(chi, x[0])]), alpha, step)
        hist.packed.append(u)
        hist.rhs.append(np.array([func(chi, u[0])]))
    return np.array([p[0] for p in hist.packed])


@dataclass(frozen=True)
class StepRecord:
    step: int
    chi: float
    F: float
    W: float
    mean_R: float
    mean_S: float
    lam: float
    constraint_residual: float
    mu_mass: float
    g_min_eig: float
    g_max_eig: float
    E: float
    entropy: float
    sigma: float
    dF_integral: float
    dW_integral: float

    COLUMNS = ("step", "chi", "F", "W", "mean_R", "mean_S", "lambda", "constraint_residual", "mu_mass",
               "g_min_eig", "g_max_eig", "E", "entropy", "sigma")

    def row(self) -> tuple:
        return (self.step, self.chi, self.F, self.W, self.mean_R, self.mean_S, self.lam,
                self.constraint_residual, self.mu_mass, self.g_min_eig, self.g_max_eig,
                self.E, self.entropy, self.sigma)


class _Evaluator:
    """Caches the geometry of the most recent state so diagnostics reuse it."""

    def __init__(self, config: FlowConfig, template: FlowState, history: FlowHistory):
        self.config = config
        self.template = template
        self.history = history

    def geometry(self, state: FlowState) -> Geometry:
        return canonical_geometry(state.metric, state.nconn, self.config.order)

    def rhs_for(self, state: FlowState, geo: Geometry) -> tuple[np.ndarray, RHS]:
        cfg = self.config
        if cfg.mode == "canonical":
            r = hamilton_rhs_canonical(state, cfg, geo, self.history)
        else:
            r = hamilton_rhs_lc(state, cfg, geo, self.history)
        parts = [r.h.ravel(), r.v.ravel()]
        if cfg.evolve_n:
            parts.append(r.p.ravel())
        if cfg.potential == "off":
            parts.append(np.zeros(state.f.size))
            parts.append(np.zeros(1))
        else:
            parts.append(coupled_potential_rhs(state, cfg, geo).ravel())
            parts.append(np.array([-1.0 if cfg.potential == "W" else 0.0]))
        return np.concatenate(parts), r

    def rhs_packed(self, u: np.ndarray, chi: float) -> np.ndarray:
        state = _unpack(u, self.template, self.config.evolve_n, chi)
        _check_state(state)
        return self.rhs_for(state, self.geometry(state))[0]


def diagnostics(step: int, state: FlowState, geo: Geometry, rhs: RHS, config: FlowConfig) -> StepRecord:
    snap = state.snapshot(config.order, geo)
    vol = snap.vol
    total = vol.total
    lo, hi = state.metric.eigen_range()
    thermo = perelman.thermodynamics(snap)
    return StepRecord(
        step=step, chi=state.chi,
        F=perelman.functional_F(snap),
        W=perelman.functional_W(snap, config.w_norm_squared),
        mean_R=vol.integrate(geo.ricci.R) / total,
        mean_S=vol.integrate(geo.ricci.S) / total,
        lam=rhs.lam, constraint_residual=rhs.residual,
        mu_mass=perelman.mu_mass(snap),
        g_min_eig=lo, g_max_eig=hi,
        E=thermo.energy, entropy=thermo.entropy, sigma=thermo.sigma,
        dF_integral=perelman.dF_dchi_integral(snap),
        dW_integral=perelman.dW_dchi_integral(snap),
    )


def evolve(config: FlowConfig, initial: FlowState,
           on_record: Callable[[StepRecord], None] | None = None) -> tuple[FlowHistory, list[StepRecord]]:
    """Run ``config.steps`` steps; one :class:`StepRecord` per completed step.

    With ``potential == "W"`` the initial potential is first shifted so that
    the mu-mass is 1.  A degenerating metric raises :class:`FlowSingularity`
    carrying the partial history and records.
    """
    order = config.order
    state = initial
    if config.potential == "W":
        state = replace(state, f=perelman.normalize_potential(state.snapshot(order)))
    _check_state(state)
    history = FlowHistory()
    ev = _Evaluator(config, state, history)
    geo = ev.geometry(state)
    F0, _ = ev.rhs_for(state, geo)
    history.append(state, _pack(state, config.evolve_n), F0)
    records: list[StepRecord] = []
    for k in range(1, config.steps + 1):
        chi = initial.chi + k * config.step
        try:
            u, _ = step_caputo_ivp(history, lambda x: ev.rhs_packed(x, chi), config.alpha, config.step)
            new = _unpack(u, state, config.evolve_n, chi)
            _check_state(new)
            geo = ev.geometry(new)
            Fk, r = ev.rhs_for(new, geo)
            rec = diagnostics(k, new, geo, r, config)
        except (DegenerateMetric, np.linalg.LinAlgError, FloatingPointError) as exc:
            raise FlowSingularity(f"flow singularity: {exc}", chi, history, records) from exc
        history.append(new, u, Fk)
        records.append(rec)
        if on_record is not None:
            on_record(rec)
        state = new
    return history, records


# --------------------------------------------------------------------------
# breathers


@dataclass(frozen=True)
class BreatherResult:
    label: str
    beta: float
    residual: float
    shift: tuple[int, ...]


def _metric_components(state: FlowState, block: str, alpha: float, margin: int) -> np.ndarray:
    """Selected metric components on the interior nodes (periodic axes kept whole)."""
    g = state.metric
    parts = {"h": [g.h], "v": [g.v], "both": [g.h, g.v]}[block]
    flat = [p.reshape(state.chart.shape + (-1,)) for p in parts]
    return np.concatenate(flat, axis=-1)[state.chart.interior(alpha, margin)]


def breather_classify(history: FlowHistory, chi1: float, chi2: float, block: str = "both",
                      threshold: float = 1e-4, steady_tol: float = 1e-8, alpha: float = 1.0,
                      margin: int = 4) -> BreatherResult:
    """Restricted breather detector: scalings combined with periodic translations.

    Minimises ``||beta g(chi1) - shift* g(chi2)|| / ||g(chi1)||`` over ``beta > 0``
    and integer node shifts along the periodic axes (found with FFT
    cross-correlation).  Boundary nodes of non-periodic axes are excluded as
    in ``GridChart.interior(alpha, margin)``; the default margin is wider than
    the one used for single-instant diagnostics because one-sided stencil
    errors at the chart edge spread inward as the flow runs.  Returns ``"none"`` if the best residual
    exceeds ``threshold``.
    """
    lo, hi = history.chi[0], history.chi[-1]
    for c in (chi1, chi2):
        if not lo - 1e-12 <= c <= hi + 1e-12:
            raise ValueError(f"chi={c} is outside the recorded range [{lo}, {hi}]")
    s1, s2 = history.state_at(chi1), history.state_at(chi2)
    A = _metric_components(s1, block, alpha, margin)
    B = _metric_components(s2, block, alpha, margin)
    chart = s1.chart
    periodic = [k for k, ax in enumerate(chart.axes) if ax.periodic]
    nA2 = float(np.sum(A * A))
    nB2 = float(np.sum(B * B))
    if periodic:
        FA = np.fft.fftn(A, axes=periodic)
        FB = np.fft.fftn(B, axes=periodic)
        # corr[s] = sum_x A(x) B(x + s)
        corr = np.fft.ifftn(np.conj(FA) * FB, axes=periodic).real
        corr = corr.sum(axis=-1)
        other = tuple(k for k in range(chart.dim) if k not in periodic)
        if other:
            corr = corr.sum(axis=other)
        best = np.unravel_index(int(np.argmax(corr)), corr.shape)
        dot = float(corr[best])
        shift = tuple(int(s) for s in best)
    else:
        dot = float(np.sum(A * B))
        shift = ()
    beta = dot / nA2
    res2 = max(nB2 - dot * dot / nA2, 0.0)
    residual = float(np.sqrt(res2 / nA2))
    if residual > threshold or beta <= 0:
        return BreatherResult("none", beta, residual, shift)
    if abs(beta - 1.0) <= steady_tol:
        label = "steady"
    elif beta < 1.0:
        label = "shrinking"
    else:
        label = "expanding"
    return BreatherResult(label, beta, residual, shift)
