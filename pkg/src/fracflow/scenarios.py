"""Ready-made charts, metrics and initial flow states used by tests, demos and the CLI."""

from __future__ import annotations

import numpy as np

from .fraccalc import AxisGrid
from .flow import FlowState
from .geometry import DMetric, GridChart, NConnectionField

SPHERE_BAND = 0.8  # the chart covers theta in [0.8, pi - 0.8], away from the poles


def torus_chart(count_h: int = 32, count_v: int = 8, n: int = 2, m: int = 1, length: float = 2 * np.pi) -> GridChart:
    axes = [AxisGrid(0.0, length, count_h, periodic=True) for _ in range(n)]
    axes += [AxisGrid(0.0, length, count_v, periodic=True) for _ in range(m)]
    return GridChart(n, m, tuple(axes))


def flat_torus(count_h: int = 16, count_v: int = 8, n: int = 2, m: int = 1) -> FlowState:
    chart = torus_chart(count_h, count_v, n, m)
    return FlowState(chart, DMetric.flat(chart), NConnectionField.zero(chart), np.zeros(chart.shape))


def perturbed_torus(count_h: int = 32, count_v: int = 8, eps: float = 0.05, f_amp: float = 0.1) -> FlowState:
    """Conformally perturbed flat 2-torus times a flat circle, with a smooth potential."""
    chart = torus_chart(count_h, count_v)
    x1, x2, y = chart.coordinates()
    conf = 1.0 + eps * np.sin(x1) * np.cos(x2)
    gh = conf[..., None, None] * np.eye(2)
    gv = np.ones(chart.shape + (1, 1))
    f = f_amp * (np.cos(x1) + 0.5 * np.sin(x2 + 0.3) + 0.3 * np.cos(y))
    return FlowState(chart, DMetric(chart, gh, gv), NConnectionField.zero(chart), f)


def sphere_chart(count: int = 64, count_v: int = 5, band: float = SPHERE_BAND) -> GridChart:
    return GridChart(2, 1, (AxisGrid(band, np.pi - band, count),
                            AxisGrid(0.0, 2 * np.pi, count, periodic=True),
                            AxisGrid(0.0, 1.0, count_v)))


def round_sphere(count: int = 64, radius: float = 1.0, count_v: int = 5) -> FlowState:
    """Round-sphere horizontal block ``r^2 (dtheta^2 + sin^2 theta dphi^2)`` with a flat vertical line."""
    chart = sphere_chart(count, count_v)
    th = chart.coordinates()[0]
    gh = np.zeros(chart.shape + (2, 2))
    gh[..., 0, 0] = radius**2
    gh[..., 1, 1] = radius**2 * np.sin(th) ** 2
    gv = np.ones(chart.shape + (1, 1))
    return FlowState(chart, DMetric(chart, gh, gv), NConnectionField.zero(chart), np.zeros(chart.shape))


def generic_fields(chart: GridChart, seed: int = 0, amplitude: float = 0.2,
                   frequency: float = 2 * np.pi) -> tuple[DMetric, NConnectionField]:
    """Smooth, well-conditioned random d-metric and N-connection built from low Fourier modes.

    Each mode is ``sin(frequency * k . x / extent + phase)`` with integer ``k`` in ``0..2``
    per axis, plus a random linear ramp.
    """
    rng = np.random.default_rng(seed)
    coords = chart.coordinates()
    scales = [ax.upper - ax.lower for ax in chart.axes]
    n, m, d = chart.n, chart.m, chart.dim

    def smooth():
        k = rng.integers(0, 3, size=d)
        phase = rng.uniform(0, 2 * np.pi)
        arg = sum(frequency * k[i] * (coords[i] - chart.axes[i].lower) / scales[i] for i in range(d))
        lin = sum(rng.normal() * (coords[i] - chart.axes[i].lower) / scales[i] for i in range(d))
        return np.sin(arg + phase) + 0.5 * lin

    def spd(size):
        base = np.eye(size) * 1.5
        out = np.broadcast_to(base, chart.shape + (size, size)).copy()
        for i in range(size):
            for j in range(i, size):
                val = amplitude * smooth() * (1.0 if i == j else 0.5)
                out[..., i, j] += val
                if i != j:
                    out[..., j, i] += val
        return out

    gh, gv = spd(n), spd(m)
    Nc = np.zeros(chart.shape + (n, m))
    for i in range(n):
        for a in range(m):
            Nc[..., i, a] = amplitude * smooth()
    return DMetric(chart, gh, gv), NConnectionField(chart, Nc)


def box_chart(count: int = 16, n: int = 2, m: int = 1, upper: float = 1.0) -> GridChart:
    return GridChart(n, m, tuple(AxisGrid(0.0, upper, count) for _ in range(n + m)))
