from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import gamma

from fracflow import perelman
from fracflow.acceptance import first_variation_errors, variation_directions
from fracflow.errors import DegenerateMetric
from fracflow.flow import FlowConfig, evolve
from fracflow.geometry import DMetric, NConnectionField
from fracflow.perelman import (
    dF_dchi_integral,
    dW_dchi_integral,
    first_variation_F,
    fractional_volume_integral,
    functional_F,
    functional_W,
    mu_mass,
    normalize_potential,
    snapshot,
    thermodynamics,
    volume_element,
)
from fracflow.scenarios import box_chart, flat_torus, perturbed_torus, round_sphere, torus_chart

from conftest import line_chart


def flat_snapshot(chart, f=None, tau=1.0, order=1.0):
    g, N = DMetric.flat(chart), NConnectionField.zero(chart)
    return snapshot(g, N, np.zeros(chart.shape) if f is None else f, tau, order)


def test_volume_of_box_and_linearity(rng):
    chart = box_chart(9, upper=2.0)
    g = DMetric.flat(chart)
    assert fractional_volume_integral(np.ones(chart.shape), g, 1.0) == pytest.approx(8.0)
    a, b = rng.normal(size=(2,) + chart.shape)
    lhs = fractional_volume_integral(2 * a - 3 * b, g, 0.6)
    rhs = 2 * fractional_volume_integral(a, g, 0.6) - 3 * fractional_volume_integral(b, g, 0.6)
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_fractional_weight_total_against_quadrature():
    alpha = 0.6
    chart = line_chart(65)
    vol = volume_element(DMetric.flat(chart), alpha)
    one_axis = quad(lambda s: (1.0 - s) ** (alpha - 1), 0, 1)[0] / gamma(alpha)
    assert vol.total == pytest.approx(one_axis**2, rel=1e-10)


def test_volume_density_uses_blocks():
    chart = box_chart(5)
    h = np.broadcast_to(np.diag([4.0, 1.0]), chart.shape + (2, 2)).copy()
    v = np.full(chart.shape + (1, 1), 9.0)
    vol = volume_element(DMetric(chart, h, v), 1.0)
    np.testing.assert_allclose(vol.density, 6.0)


def test_normalize_potential():
    chart = box_chart(9)
    s = flat_snapshot(chart, tau=1 / (4 * np.pi))
    f1 = normalize_potential(s)
    np.testing.assert_allclose(f1, 0.0, atol=1e-14)  # unit box, tau = 1/4pi: already mass 1
    s2 = flat_snapshot(chart, f=np.full(chart.shape, 0.7), tau=1.0)
    f2 = normalize_potential(s2)
    assert mu_mass(replace(s2, f=f2)) == pytest.approx(1.0, abs=1e-12)
    s3 = flat_snapshot(chart, f=f2 + 5.0, tau=1.0)
    np.testing.assert_allclose(normalize_potential(s3), f2, atol=1e-12)


def test_degenerate_volume_rejected():
    chart = box_chart(5)
    h = np.zeros(chart.shape + (2, 2))
    with pytest.raises(DegenerateMetric):
        volume_element(DMetric(chart, h, np.ones(chart.shape + (1, 1))), 1.0)


def test_F_flat_constant_is_zero():
    s = flat_snapshot(torus_chart(8, 8), f=np.full((8, 8, 8), 0.4))
    assert functional_F(s) == 0.0
    assert dF_dchi_integral(s) == 0.0


def test_F_one_dimensional_oracle():
    chart = torus_chart(64, 8, n=1, m=1, length=1.0)
    x = chart.coordinates()[0]
    eps = 0.1
    s = flat_snapshot(chart, f=eps * np.sin(2 * np.pi * x))
    fp = lambda t: 2 * np.pi * eps * np.cos(2 * np.pi * t)
    oracle = quad(lambda t: fp(t) ** 2 * np.exp(-eps * np.sin(2 * np.pi * t)), 0, 1)[0]
    # the periodic central stencil underestimates the derivative by sin(kh)/(kh)
    kh = 2 * np.pi / 64
    assert functional_F(s) == pytest.approx(oracle * (np.sin(kh) / kh) ** 2, rel=1e-6)


def test_F_on_sphere_is_curvature_integral():
    errs = []
    for count in (24, 48):
        s0 = round_sphere(count)
        s = snapshot(s0.metric, s0.nconn, np.full(s0.chart.shape, 0.2), 1.0, 1.0)
        expected = 2.0 * np.exp(-0.2) * s.vol.total
        errs.append(abs(functional_F(s) / expected - 1.0))
    assert errs[1] < 5e-3
    assert errs[1] < errs[0] / 3.5  # second order, boundary nodes included


def test_W_flat_normalized_constant():
    chart = torus_chart(8, 8)
    s = flat_snapshot(chart, f=np.full(chart.shape, 0.3))
    f0 = normalize_potential(s)
    sn = replace(s, f=f0)
    for sq in (False, True):
        assert functional_W(sn, norm_squared=sq) == pytest.approx(float(f0.flat[0]) - 1.5, abs=1e-12)


def test_first_variation_trivial_cases():
    s0 = perturbed_torus(16, 8)
    s = snapshot(s0.metric, s0.nconn, s0.f)
    z = np.zeros(s0.chart.shape)
    zh, zv = np.zeros(s0.chart.shape + (2, 2)), np.zeros(s0.chart.shape + (1, 1))
    assert first_variation_F(s, zh, zv, z, z) == 0.0
    flat = flat_snapshot(torus_chart(8, 8), f=np.full((8, 8, 8), 0.2))
    x1 = flat.g.chart.coordinates()[0]
    assert first_variation_F(flat, np.zeros((8, 8, 8, 2, 2)), np.zeros((8, 8, 8, 1, 1)), np.sin(x1), 0 * x1) == 0.0


def test_first_variation_matches_central_differences():
    s0 = perturbed_torus(32, 16)
    errs = first_variation_errors(s0, variation_directions(s0, seed=3, count=2))
    assert max(errs) <= 1e-3


def test_first_variation_converges_under_refinement():
    worst = []
    for cnt in (16, 32):
        s0 = perturbed_torus(cnt, 16)
        worst.append(max(first_variation_errors(s0, variation_directions(s0, seed=5, count=1))))
    assert worst[1] < worst[0]


def test_printed_first_variation_form_differs():
    s0 = perturbed_torus(24, 16)
    s = snapshot(s0.metric, s0.nconn, s0.f)
    vh, vv, fh, fv = variation_directions(s0, seed=2, count=1)[0]
    a = first_variation_F(s, vh, vv, fh, fv)
    b = first_variation_F(s, vh, vv, fh, fv, printed=True)
    assert abs(a - b) > 1e-3 * abs(a)


def test_flow_rates_nonnegative():
    for st in (perturbed_torus(16, 4), round_sphere(24, count_v=3)):
        s = snapshot(st.metric, st.nconn, st.f, 0.7, 1.0)
        assert dF_dchi_integral(s) >= -1e-12
        assert dW_dchi_integral(s) >= -1e-12
        assert thermodynamics(s).sigma >= 0.0


def test_dW_flat_stationary_closed_form():
    chart = torus_chart(8, 8)
    tau = 0.8
    s = flat_snapshot(chart, f=np.full(chart.shape, 0.1), tau=tau)
    dim = chart.dim
    expected = 2 * tau * dim * (0.5 / tau) ** 2 * mu_mass(s)
    assert dW_dchi_integral(s) == pytest.approx(expected, rel=1e-12)
    with pytest.raises(ValueError):
        dW_dchi_integral(replace(s, tau=0.0))


def test_dW_vanishes_on_soliton_like_input():
    """On a flat torus with f = |x|^2/(4 tau) locally, H_ij = g_ij/(2 tau); check one interior node."""
    chart = box_chart(17, n=2, m=1, upper=1.0)
    x1, x2, y = chart.coordinates()
    tau = 0.5
    f = (x1**2 + x2**2 + y**2) / (4 * tau)
    s = flat_snapshot(chart, f=f, tau=tau)
    sl = chart.interior(1.0)
    c = 0.5 / tau
    resid_h = s.terms.hess_h - c * s.g.h
    resid_v = s.terms.hess_v - c * s.g.v
    assert np.max(np.abs(resid_h[sl])) < 1e-10 and np.max(np.abs(resid_v[sl])) < 1e-10


def test_thermodynamics_flat_constant():
    chart = torus_chart(8, 8)
    s = flat_snapshot(chart, f=np.full(chart.shape, 0.25))
    s = replace(s, f=normalize_potential(s))
    th = thermodynamics(s)
    f0 = float(s.f.flat[0])
    dim = chart.dim
    assert th.energy == pytest.approx(dim / 2, abs=1e-12)
    assert th.log_z == pytest.approx(-f0 + dim / 2, abs=1e-12)
    assert th.entropy == pytest.approx(-f0 + dim / 2, abs=1e-12)
    # the statistical identity holds up to the constant offset (n + m) / 2
    assert th.entropy - (th.energy + th.log_z) == pytest.approx(-dim / 2, abs=1e-12)
    with pytest.raises(ValueError):
        thermodynamics(replace(s, tau=-1.0))


def test_F_monotone_along_coupled_flow():
    dt = 1e-3
    _, recs = evolve(FlowConfig(step=dt, steps=10, potential="F"), perturbed_torus(16, 4))
    F = np.array([r.F for r in recs])
    fd = np.diff(F) / dt
    I = np.array([r.dF_integral for r in recs])
    assert fd.min() >= -1e-8
    np.testing.assert_allclose(fd, 0.5 * (I[1:] + I[:-1]), rtol=0.05)


def test_W_monotone_along_coupled_flow():
    dt = 1e-3
    _, recs = evolve(FlowConfig(step=dt, steps=10, potential="W", w_norm_squared=True), perturbed_torus(16, 4))
    W = np.array([r.W for r in recs])
    fd = np.diff(W) / dt
    I = np.array([r.dW_integral for r in recs])
    assert fd.min() >= -1e-8
    np.testing.assert_allclose(fd, 0.5 * (I[1:] + I[:-1]), rtol=0.05)
    mass = np.array([r.mu_mass for r in recs])
    assert np.max(np.abs(mass - 1.0)) < 1e-6
