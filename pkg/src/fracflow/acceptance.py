"""Acceptance checks shared by ``fracflow selftest`` and the test suite.

Each check returns a :class:`CriterionResult` with the measured quantity so a
failure reports how far off it was.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import gamma

from . import perelman
from .connection import (
    canonical_dconnection,
    canonical_geometry,
    dtorsion,
    levi_civita_distortion,
    metricity_residual,
)
from .fraccalc import AxisGrid, SampledCurve, all_partials, caputo_left, fundamental_theorem_residual
from .flow import FlowConfig, evolve, solve_scalar_ivp
from .geometry import DMetric, dmetric_to_coordinate, push_connection, vielbein
from .scenarios import box_chart, flat_torus, generic_fields, perturbed_torus, round_sphere


@dataclass(frozen=True)
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] criterion {self.number:2d} {self.name}: {self.detail} ({self.seconds:.2f}s)"


def _power_rule_error(count: int) -> float:
    grid = AxisGrid(0.0, 1.0, count)
    x = grid.nodes
    num = caputo_left(SampledCurve(grid, x**2), 0.5).values
    exact = gamma(3.0) / gamma(2.5) * x**1.5
    mask = x >= 0.05
    return float(np.max(np.abs(num[mask] - exact[mask]) / exact[mask]))


def criterion_1() -> CriterionResult:
    t0 = time.perf_counter()
    e1 = _power_rule_error(1024)
    elapsed = time.perf_counter() - t0
    e2 = _power_rule_error(2048)
    ratio = e1 / e2
    ok = e1 <= 1e-3 and ratio >= 2**1.4 and elapsed < 1.0
    return CriterionResult(1, "Caputo power rule", ok,
                           f"rel err {e1:.3e} (<=1e-3), refinement ratio {ratio:.3f} (>= {2**1.4:.3f}), "
                           f"1024-node time {elapsed:.3f}s (<1s)")


def criterion_2() -> CriterionResult:
    worst = 0.0
    for a in (0.3, 0.5, 0.8):
        for c in (1.0, -3.7, 1e3):
            grid = AxisGrid(0.0, 1.0, 257)
            worst = max(worst, float(np.max(np.abs(caputo_left(SampledCurve(grid, np.full(257, c)), a).values))))
    return CriterionResult(2, "constant annihilation", worst <= 1e-14, f"max |D^a C| = {worst:.3e} (<=1e-14)")


def criterion_3() -> CriterionResult:
    res = []
    for count in (256, 512, 1024, 2048):
        grid = AxisGrid(0.0, 1.0, count)
        res.append(fundamental_theorem_residual(SampledCurve(grid, grid.nodes**1.5), 0.5))
    at1024 = res[2]
    mono = all(b < a for a, b in zip(res, res[1:]))
    return CriterionResult(3, "fundamental theorem", at1024 <= 1e-3 and mono,
                           f"residual@1024 {at1024:.3e} (<=1e-3), sequence {[f'{r:.2e}' for r in res]} decreasing={mono}")


def _generic_inputs(count: int = 16, seed: int = 3, frequency: float = 2 * np.pi):
    chart = box_chart(count)
    g, N = generic_fields(chart, seed=seed, frequency=frequency)
    return chart, g, N


def criterion_4() -> CriterionResult:
    _, g, N = _generic_inputs()
    worst = 0.0
    for a in (0.5, 1.0):
        T = dtorsion(canonical_dconnection(g, N, a), N, a)
        worst = max(worst, float(np.max(np.abs(T.T_hhh))), float(np.max(np.abs(T.T_vvv))))
    return CriterionResult(4, "canonical torsion", worst <= 1e-12, f"max |T^i_jk|,|T^a_bc| = {worst:.3e} (<=1e-12)")


def criterion_5() -> CriterionResult:
    _, g, N = _generic_inputs()
    worst = max(metricity_residual(canonical_dconnection(g, N, a), g, N, a) for a in (0.5, 1.0))
    return CriterionResult(5, "metricity identity", worst <= 1e-10, f"residual {worst:.3e} (<=1e-10)")


def criterion_6() -> CriterionResult:
    state = round_sphere(64)
    geo = canonical_geometry(state.metric, state.nconn, 1.0)
    sl = state.chart.interior(1.0)
    th = state.chart.coordinates()[0]
    r_err = float(np.max(np.abs(geo.ricci.R - 2.0)[sl]))
    L = geo.gamma.L_h
    exact = np.zeros_like(L)
    exact[..., 0, 1, 1] = -np.sin(th) * np.cos(th)
    exact[..., 1, 0, 1] = exact[..., 1, 1, 0] = np.cos(th) / np.sin(th)
    c_err = float(np.max(np.abs(L - exact)[sl]))
    return CriterionResult(6, "integer-geometry reduction", r_err <= 2e-3 and c_err <= 1e-3,
                           f"|R - 2| {r_err:.3e} (<=2e-3), Christoffel err {c_err:.3e} (<=1e-3)")


def criterion_7(count: int = 24) -> CriterionResult:
    chart, g, N = _generic_inputs(count, seed=5, frequency=1.0)
    dist = levi_civita_distortion(g, N, 1.0)
    pushed = push_connection(dist.levi_civita, vielbein(N), 1.0)
    gc = dmetric_to_coordinate(g, N).full
    dg = all_partials(gc, chart, 1.0)  # [m, n, l] = d_l g_mn
    low = 0.5 * (np.einsum("...nlm->...lnm", dg) + np.einsum("...mln->...lnm", dg) - np.einsum("...nml->...lnm", dg))
    chris = np.einsum("...sl,...lnm->...snm", np.linalg.inv(gc), low)
    err = float(np.max(np.abs(pushed - chris)[chart.interior(1.0)]))
    return CriterionResult(7, "distortion consistency", err <= 1e-3, f"max coordinate Christoffel diff {err:.3e} (<=1e-3)")


def criterion_8() -> CriterionResult:
    worst_g = worst_F = 0.0
    for a in (0.7, 1.0):
        state = flat_torus(8, 4)
        hist, recs = evolve(FlowConfig(alpha=a, step=1e-3, steps=100, potential="F"), state)
        last = hist.states[-1].metric
        worst_g = max(worst_g, float(np.max(np.abs(last.h - state.metric.h))), float(np.max(np.abs(last.v - state.metric.v))))
        worst_F = max(worst_F, max(abs(r.F) for r in recs))
    ok = worst_g <= 1e-8 and worst_F <= 1e-10
    return CriterionResult(8, "flat fixed point", ok, f"||g - g0|| {worst_g:.3e} (<=1e-8), |F| {worst_F:.3e} (<=1e-10)")


def criterion_9() -> CriterionResult:
    state = round_sphere(32, count_v=3)
    hist, _ = evolve(FlowConfig(alpha=1.0, step=1e-4, steps=50), state)
    sl = state.chart.interior(1.0)
    chi = np.asarray(hist.chi)
    conf = np.array([s.metric.h[..., 0, 0][sl].mean() for s in hist.states])
    err = float(np.max(np.abs(conf - (1 - 2 * chi)) / (1 - 2 * chi)))
    return CriterionResult(9, "sphere shrink", err <= 1e-2, f"max rel dev from 1-2chi {err:.3e} (<=1e-2)")


def criterion_10() -> CriterionResult:
    a = 0.5
    u = solve_scalar_ivp(lambda chi, x: gamma(a + 1.0), 0.0, a, 0.01, 100)
    chi = 0.01 * np.arange(101)
    err = float(np.max(np.abs(u - chi**a)))
    return CriterionResult(10, "fractional IVP oracle", err <= 1e-3, f"max |u - chi^a| {err:.3e} (<=1e-3)")


def criterion_11() -> CriterionResult:
    dt = 1e-3
    state = perturbed_torus(24, 4)
    _, recs = evolve(FlowConfig(alpha=1.0, step=dt, steps=20, potential="F"), state)
    F = np.array([r.F for r in recs])
    I = np.array([r.dF_integral for r in recs])
    fd = np.diff(F) / dt
    mid = 0.5 * (I[1:] + I[:-1])
    rel = float(np.max(np.abs(fd - mid) / np.abs(mid)))
    ok = fd.min() >= -1e-8 and rel <= 0.05
    return CriterionResult(11, "F monotonicity", ok, f"min dF/dchi {fd.min():.3e} (>=-1e-8), rel diff to integral {rel:.3e} (<=5e-2)")


def variation_directions(state, seed: int = 11, count: int = 3):
    """Random smooth variations of product type: v_ij(x), v_ab(y), f_h(x), f_v(y)."""
    chart = state.chart
    x1, x2, y = chart.coordinates()
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        c = rng.normal(size=8)
        p = rng.uniform(0, 2 * np.pi, size=4)
        vh = np.zeros(chart.shape + (2, 2))
        vh[..., 0, 0] = c[0] * np.cos(x1 + x2 + p[0])
        vh[..., 1, 1] = c[1] * np.sin(x2 + p[1])
        vh[..., 0, 1] = vh[..., 1, 0] = 0.3 * c[2] * np.cos(x1 - p[2])
        vv = (0.5 * c[3] * np.cos(y + p[3]))[..., None, None]
        fh = 0.5 * c[4] * np.sin(x1) + 0.2 * c[5] * np.cos(x2)
        fv = 0.3 * c[6] * np.cos(y) + 0.1 * c[7] * np.sin(2 * y)
        out.append((vh, vv, fh, fv))
    return out


def first_variation_errors(state, directions, eps: float = 1e-4) -> list[float]:
    chart = state.chart
    base = perelman.snapshot(state.metric, state.nconn, state.f, 1.0, 1.0)
    errs = []
    for vh, vv, fh, fv in directions:
        def F_at(e):
            g = DMetric(chart, state.metric.h + e * vh, state.metric.v + e * vv)
            return perelman.functional_F(perelman.snapshot(g, state.nconn, state.f + e * (fh + fv), 1.0, 1.0))

        fd = (F_at(eps) - F_at(-eps)) / (2 * eps)
        an = perelman.first_variation_F(base, vh, vv, fh, fv)
        errs.append(abs(an - fd) / abs(fd))
    return errs


def criterion_12() -> CriterionResult:
    state = perturbed_torus(32, 16)
    errs = first_variation_errors(state, variation_directions(state))
    worst = max(errs)
    return CriterionResult(12, "first variation", worst <= 1e-3, f"rel errors {[f'{e:.2e}' for e in errs]} (<=1e-3)")


def mu_drift(step: float, steps: int) -> float:
    state = perturbed_torus(24, 4)
    _, recs = evolve(FlowConfig(alpha=1.0, step=step, steps=steps, potential="W", w_norm_squared=True), state)
    mass = np.array([1.0] + [r.mu_mass for r in recs])
    return float(np.max(np.abs(np.diff(mass))))


def criterion_13() -> CriterionResult:
    state = perturbed_torus(24, 4)
    snap = perelman.snapshot(state.metric, state.nconn, state.f, 1.0, 1.0)
    fn = perelman.normalize_potential(snap)
    mass = perelman.mu_mass(perelman.snapshot(state.metric, state.nconn, fn, 1.0, 1.0, snap.geo))
    d1 = mu_drift(1e-3, 10)
    d2 = mu_drift(5e-4, 20)
    ratio = d2 / d1 if d1 > 0 else 0.0
    ok = abs(mass - 1.0) <= 1e-10 and d1 <= 1e-4 and ratio <= 0.55
    return CriterionResult(13, "mu normalization", ok,
                           f"|mass-1| {abs(mass - 1):.3e} (<=1e-10), drift/step {d1:.3e} (<=1e-4), "
                           f"drift ratio on halving {ratio:.3e} (<=0.55)")


def criterion_14() -> CriterionResult:
    state = flat_torus(8, 4)
    snap = perelman.snapshot(state.metric, state.nconn, state.f, 1.0, 1.0)
    f0 = perelman.normalize_potential(snap)
    s = perelman.snapshot(state.metric, state.nconn, f0, 1.0, 1.0, snap.geo)
    th = perelman.thermodynamics(s)
    dim = state.chart.dim
    e_err = abs(th.energy - dim / 2.0)
    z_err = abs(th.log_z - (-float(f0.flat[0]) + dim / 2.0))
    sigmas = [th.sigma]
    for st in (perturbed_torus(16, 4), round_sphere(24, count_v=3)):
        sigmas.append(perelman.thermodynamics(perelman.snapshot(st.metric, st.nconn, st.f, 0.5, 1.0)).sigma)
    ok = e_err <= 1e-8 and z_err <= 1e-8 and min(sigmas) >= 0.0
    return CriterionResult(14, "thermodynamics sanity", ok,
                           f"|E - (n+m)/2| {e_err:.3e}, |logZ - hand| {z_err:.3e} (<=1e-8), min sigma {min(sigmas):.3e} (>=0)")


CHECKS: tuple[Callable[[], CriterionResult], ...] = (
    criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7,
    criterion_8, criterion_9, criterion_10, criterion_11, criterion_12, criterion_13, criterion_14,
)


def run_check(check: Callable[[], CriterionResult]) -> CriterionResult:
    t0 = time.perf_counter()
    res = check()
    return CriterionResult(res.number, res.name, res.passed, res.detail, time.perf_counter() - t0)


def run_all(emit: Callable[[str], None] | None = print, budget: float = 120.0,
            only: tuple[int, ...] | None = None) -> list[CriterionResult]:
    """Run criteria 1-14, then criterion 15 on the total wall time.

    With ``only`` set, just those criteria run and the runtime criterion is
    evaluated only if it is listed.
    """
    checks = CHECKS if only is None else tuple(c for i, c in enumerate(CHECKS, 1) if i in only)
    t0 = time.perf_counter()
    results = []
    for check in checks:
        res = run_check(check)
        results.append(res)
        if emit:
            emit(res.line())
    if only is not None and 15 not in only:
        return results
    total = time.perf_counter() - t0
    every = all(r.passed for r in results)
    final = CriterionResult(15, "selftest runtime", total < budget and every,
                            f"total {total:.1f}s (<{budget:.0f}s), all criteria passed={every}", total)
    results.append(final)
    if emit:
        emit(final.line())
    return results
