from __future__ import annotations

import numpy as np
import pytest

from fracflow.geometry import DMetric, GridChart, NConnectionField
from fracflow.fraccalc import AxisGrid
from fracflow.scenarios import box_chart, generic_fields


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def box16():
    return box_chart(16)


@pytest.fixture
def generic16(box16):
    g, N = generic_fields(box16, seed=3)
    return box16, g, N


@pytest.fixture
def product_fields():
    """Product d-metric g_ij(x), g_ab(y) with N = 0 on a 12^3 box."""
    chart = box_chart(12)
    x1, x2, y = chart.coordinates()
    gh = np.zeros(chart.shape + (2, 2))
    gh[..., 0, 0] = 1.2 + 0.3 * np.sin(x1 + x2)
    gh[..., 1, 1] = 1.0 + 0.2 * x1 * x2
    gh[..., 0, 1] = gh[..., 1, 0] = 0.1 * np.cos(x1 - x2)
    gv = (1.0 + 0.3 * y**2)[..., None, None]
    return chart, DMetric(chart, gh, gv), NConnectionField.zero(chart)


def line_chart(count: int = 16, n: int = 1, m: int = 1, upper: float = 1.0, periodic: bool = False) -> GridChart:
    return GridChart(n, m, tuple(AxisGrid(0.0, upper, count, periodic=periodic) for _ in range(n + m)))
