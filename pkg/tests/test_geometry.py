from __future__ import annotations

import numpy as np
import pytest

from fracflow.errors import DegenerateMetric, GridError, InvalidSamples
from fracflow.fraccalc import AxisGrid, partial
from fracflow.geometry import (
    CoordinateMetric,
    DMetric,
    GridChart,
    NConnectionField,
    anholonomy,
    coordinate_to_dmetric,
    dmetric_to_coordinate,
    frame_derivatives,
    nadapted_derivative,
    push_covariant,
    safe_inverse,
    vielbein,
)
from fracflow.scenarios import box_chart, generic_fields

from conftest import line_chart


def test_chart_shape_and_interior():
    chart = GridChart(2, 1, (AxisGrid(0, 1, 10), AxisGrid(0, 1, 12, periodic=True), AxisGrid(0, 1, 3)))
    assert chart.dim == 3 and chart.shape == (10, 12, 3)
    sl = chart.interior(1.0)
    assert sl[0] == slice(2, 8) and sl[1] == slice(None) and sl[2] == slice(1, 2)
    assert chart.interior(0.5)[0] == slice(2, None)
    with pytest.raises(GridError):
        GridChart(2, 1, (AxisGrid(0, 1, 10), AxisGrid(0, 1, 10)))


def test_field_validation(box16):
    with pytest.raises(GridError):
        NConnectionField(box16, np.zeros(box16.shape + (1, 2)))
    bad = np.zeros(box16.shape + (2, 1))
    bad[0, 0, 0, 0, 0] = np.inf
    with pytest.raises(InvalidSamples):
        NConnectionField(box16, bad)
    h = np.zeros(box16.shape + (2, 2))
    h[..., 0, 1] = 1.0
    with pytest.raises(ValueError, match="symmetric"):
        DMetric(box16, h, np.ones(box16.shape + (1, 1)))


def test_safe_inverse_guard():
    good = np.array([[2.0, 0.1], [0.1, 1.0]])
    np.testing.assert_allclose(safe_inverse(good) @ good, np.eye(2), atol=1e-14)
    with pytest.raises(DegenerateMetric):
        safe_inverse(np.diag([1.0, 1e-9]))
    with pytest.raises(DegenerateMetric):
        safe_inverse(np.zeros((2, 2)))


def test_frame_derivative_reduces_to_partial_without_n(box16):
    x1, x2, y = box16.coordinates()
    f = np.sin(x1) * x2**2 + y
    N = NConnectionField.zero(box16)
    for alpha in (0.5, 1.0):
        e = frame_derivatives(f, N, alpha)
        for k in range(3):
            np.testing.assert_array_equal(e[..., k], partial(f, box16, k, alpha))


def test_frame_derivative_of_vertical_function(generic16):
    chart, g, N = generic16
    y = chart.coordinates()[2]
    f = np.cos(y)
    for alpha in (0.5, 1.0):
        e = frame_derivatives(f, N, alpha)
        dy = partial(f, chart, 2, alpha)
        for j in range(2):
            np.testing.assert_allclose(e[..., j], -N.coefficients[..., j, 0] * dy, atol=1e-14)


def test_frame_derivative_of_vertical_coordinate():
    chart = line_chart(9, n=1, m=1)
    c = 0.7
    N = NConnectionField(chart, np.full(chart.shape + (1, 1), c))
    y = chart.coordinates()[1]
    np.testing.assert_allclose(nadapted_derivative(y, 0, N, 1.0), -c, atol=1e-14)
    with pytest.raises(IndexError):
        nadapted_derivative(y, 2, N, 1.0)


def test_anholonomy_trivial_cases(box16):
    x1, x2, y = box16.coordinates()
    zero = anholonomy(NConnectionField.zero(box16), 0.5)
    assert np.all(zero.W == 0) and np.all(zero.omega == 0)
    Nc = np.zeros(box16.shape + (2, 1))
    Nc[..., 0, 0] = 0.3 + 0 * x1
    Nc[..., 1, 0] = -1.1
    const = anholonomy(NConnectionField(box16, Nc), 0.5)
    assert np.all(const.W == 0) and np.all(const.omega == 0)


def test_anholonomy_closed_form():
    chart = box_chart(17)
    x1, x2, y = chart.coordinates()
    Nc = np.zeros(chart.shape + (2, 1))
    Nc[..., 0, 0] = x1**2 * x2
    an = anholonomy(NConnectionField(chart, Nc), 1.0)
    # omega[i, j, a] = e_j N_i^a - e_i N_j^a
    np.testing.assert_allclose(an.omega[..., 0, 1, 0], x1**2, atol=1e-12)
    np.testing.assert_allclose(an.omega[..., 1, 0, 0], -x1**2, atol=1e-12)


def test_anholonomy_antisymmetric(generic16):
    _, _, N = generic16
    for alpha in (0.5, 1.0):
        an = anholonomy(N, alpha)
        np.testing.assert_allclose(an.omega, -np.swapaxes(an.omega, -2, -3), atol=1e-12)
        np.testing.assert_allclose(an.W, -np.swapaxes(an.W, -1, -2), atol=1e-12)


@pytest.mark.parametrize("count", [24])
def test_anholonomy_matches_commutator_at_integer_order(count):
    chart = box_chart(count)
    g, N = generic_fields(chart, seed=7, frequency=1.0)
    x1, x2, y = chart.coordinates()
    phi = np.sin(x1 + 0.5 * y) * np.cos(x2) + y**2
    e = frame_derivatives(phi, N, 1.0)
    ee = frame_derivatives(e, N, 1.0)  # [..., b, c] = e_c e_b phi
    bracket = np.swapaxes(ee, -1, -2) - ee  # [..., c, d] = e_c e_d phi - e_d e_c phi
    W = anholonomy(N, 1.0).W
    predicted = np.einsum("...mcd,...m->...cd", W, e)
    sl = chart.interior(1.0)
    assert np.max(np.abs(bracket - predicted)[sl]) < 5e-3


def test_vielbein_single_node_example():
    chart = GridChart(1, 1, (AxisGrid(0, 1, 3), AxisGrid(0, 1, 3)))
    fr = vielbein(NConnectionField(chart, np.full(chart.shape + (1, 1), 3.0)))
    np.testing.assert_array_equal(fr.forward[1, 1], [[1, 3], [0, 1]])
    np.testing.assert_array_equal(fr.inverse[1, 1], [[1, -3], [0, 1]])
    zero = vielbein(NConnectionField.zero(chart))
    np.testing.assert_array_equal(zero.forward, np.broadcast_to(np.eye(2), chart.shape + (2, 2)))


def test_vielbein_duality(generic16):
    _, _, N = generic16
    fr = vielbein(N)
    np.testing.assert_allclose(fr.forward @ fr.inverse, np.broadcast_to(np.eye(3), fr.forward.shape), atol=1e-12)
    np.testing.assert_allclose(np.linalg.det(fr.forward), 1.0, atol=1e-12)


def test_coordinate_metric_closed_form():
    chart = line_chart(4)
    c = 0.4
    g = DMetric.flat(chart)
    G = dmetric_to_coordinate(g, NConnectionField(chart, np.full(chart.shape + (1, 1), c)))
    np.testing.assert_allclose(G.full[0, 0], [[1 + c * c, c], [c, 1]])
    back, N = coordinate_to_dmetric(G)
    np.testing.assert_allclose(N.coefficients, c)
    np.testing.assert_allclose(back.h, 1.0)


def test_coordinate_metric_block_diagonal_without_n(generic16):
    chart, g, _ = generic16
    G = dmetric_to_coordinate(g, NConnectionField.zero(chart))
    assert np.all(G.full[..., :2, 2:] == 0)
    _, N = coordinate_to_dmetric(G)
    assert np.all(N.coefficients == 0)


def test_coordinate_round_trip(generic16, rng):
    chart, g, N = generic16
    G = dmetric_to_coordinate(g, N)
    g2, N2 = coordinate_to_dmetric(G)
    np.testing.assert_allclose(g2.h, g.h, atol=1e-12)
    np.testing.assert_allclose(g2.v, g.v, atol=1e-12)
    np.testing.assert_allclose(N2.coefficients, N.coefficients, atol=1e-12)
    # random well-conditioned coordinate metric
    A = rng.normal(size=chart.shape + (3, 3)) * 0.2
    full = np.eye(3) * 2 + A @ np.swapaxes(A, -1, -2)
    Gr = CoordinateMetric(chart, full)
    np.testing.assert_allclose(dmetric_to_coordinate(*coordinate_to_dmetric(Gr)).full, full, atol=1e-12)


def test_push_covariant_recovers_coordinate_metric(generic16):
    chart, g, N = generic16
    frame_metric = np.zeros(chart.shape + (3, 3))
    frame_metric[..., :2, :2] = g.h
    frame_metric[..., 2:, 2:] = g.v
    pushed = push_covariant(frame_metric, vielbein(N))
    np.testing.assert_allclose(pushed, dmetric_to_coordinate(g, N).full, atol=1e-13)
