"""Charts with a horizontal/vertical split, N-connections, adapted frames and metrics.

Index layout
------------
Fields are stored with the chart grid as leading dimensions followed by
tensor indices.  Coordinates are ``u = (x^1..x^n, y^1..y^m)``; vertical
indices are stored locally as ``0..m-1`` and live at global position
``n + a``.

* ``NConnectionField.coefficients[..., i, a]`` is ``N_i^a``.
* ``DMetric.h[..., i, j]`` and ``DMetric.v[..., a, b]`` are the two blocks.
* Frame derivatives are returned with the direction index last:
  ``frame_derivatives(F)[..., beta] = e_beta F``.

The adapted frame is ``e_j = d_j - N_j^a d_a`` and ``e_b = d_b``, so the
bracket of two horizontal frame vectors is ``[e_i, e_j] = Omega^a_ij e_a`` with
``Omega^a_ij = e_j N_i^a - e_i N_j^a``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ChartMismatch, DegenerateMetric, GridError, InvalidSamples
from .fraccalc import AxisGrid, FractionalOrder, all_partials, as_order

CONDITION_LIMIT = 1e8


@dataclass(frozen=True)
class GridChart:
    """Coordinate box sampled on a tensor-product grid, split as ``n + m``."""

    n: int
    m: int
    axes: tuple[AxisGrid, ...]

    def __post_init__(self):
        object.__setattr__(self, "axes", tuple(self.axes))
        if self.n < 1 or self.m < 1:
            raise GridError("chart needs n >= 1 horizontal and m >= 1 vertical axes")
        if len(self.axes) != self.n + self.m:
            raise GridError(f"chart with n={self.n}, m={self.m} needs {self.n + self.m} axes, got {len(self.axes)}")
        for ax in self.axes:
            ax.require(3)

    @property
    def dim(self) -> int:
        return self.n + self.m

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(ax.count for ax in self.axes)

    @property
    def spacings(self) -> tuple[float, ...]:
        return tuple(ax.spacing for ax in self.axes)

    def coordinates(self) -> list[np.ndarray]:
        """Coordinate arrays ``u^gamma`` broadcast to the full grid."""
        return list(np.meshgrid(*[ax.nodes for ax in self.axes], indexing="ij"))

    def interior(self, alpha: float, margin: int = 2) -> tuple[slice, ...]:
        """Slices dropping boundary nodes where the stencils are least accurate.

        Fractional operators are one-sided from the lower terminal, so only the
        lower end is trimmed.  Classical stencils are one-sided at both ends of
        a non-periodic axis, so both ends are trimmed at ``alpha == 1``.
        Periodic axes are never trimmed at ``alpha == 1``.  Short axes keep at
        least one node.
        """
        out = []
        for ax in self.axes:
            if alpha == 1.0:
                k = min(margin, (ax.count - 1) // 2)
                out.append(slice(None) if ax.periodic else slice(k, ax.count - k))
            else:
                out.append(slice(min(margin, ax.count - 1), None))
        return tuple(out)

    def same_as(self, other: "GridChart") -> bool:
        return self == other


def _require_chart(*objs) -> GridChart:
    chart = objs[0].chart
    for o in objs[1:]:
        if o.chart != chart:
            raise ChartMismatch("fields are defined on different charts")
    return chart


@dataclass(frozen=True)
class NConnectionField:
    """Coefficients ``N_i^a`` on a chart."""

    chart: GridChart
    coefficients: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=float)
        expected = self.chart.shape + (self.chart.n, self.chart.m)
        if c.shape != expected:
            raise GridError(f"N coefficients have shape {c.shape}, expected {expected}")
        if not np.all(np.isfinite(c)):
            raise InvalidSamples("invalid samples: non-finite N-connection coefficients")
        object.__setattr__(self, "coefficients", c)

    @classmethod
    def zero(cls, chart: GridChart) -> "NConnectionField":
        return cls(chart, np.zeros(chart.shape + (chart.n, chart.m)))


@dataclass(frozen=True)
class DMetric:
    """Block-diagonal metric in the adapted frame: ``g_ij`` and ``g_ab``."""

    chart: GridChart
    h: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.h, dtype=float)
        v = np.asarray(self.v, dtype=float)
        n, m = self.chart.n, self.chart.m
        if h.shape != self.chart.shape + (n, n) or v.shape != self.chart.shape + (m, m):
            raise GridError("metric block shapes do not match the chart")
        if not (np.all(np.isfinite(h)) and np.all(np.isfinite(v))):
            raise InvalidSamples("invalid samples: non-finite metric coefficients")
        if not (np.allclose(h, np.swapaxes(h, -1, -2), rtol=0, atol=1e-12)
                and np.allclose(v, np.swapaxes(v, -1, -2), rtol=0, atol=1e-12)):
            raise ValueError("metric blocks must be symmetric")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "v", v)

    @classmethod
    def flat(cls, chart: GridChart) -> "DMetric":
        return cls(chart,
                   np.broadcast_to(np.eye(chart.n), chart.shape + (chart.n, chart.n)).copy(),
                   np.broadcast_to(np.eye(chart.m), chart.shape + (chart.m, chart.m)).copy())

    @cached_property
    def _inverses(self) -> tuple[np.ndarray, np.ndarray]:
        return safe_inverse(self.h, "horizontal"), safe_inverse(self.v, "vertical")

    def inverses(self) -> tuple[np.ndarray, np.ndarray]:
        """Inverse blocks ``(g^ij, g^ab)``, computed once and cached."""
        return self._inverses

    def eigen_range(self) -> tuple[float, float]:
        eh = np.linalg.eigvalsh(self.h)
        ev = np.linalg.eigvalsh(self.v)
        return float(min(eh.min(), ev.min())), float(max(eh.max(), ev.max()))


@dataclass(frozen=True)
class CoordinateMetric:
    """Full symmetric metric in the coordinate frame."""

    chart: GridChart
    full: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.full, dtype=float)
        d = self.chart.dim
        if g.shape != self.chart.shape + (d, d):
            raise GridError("coordinate metric shape does not match the chart")
        object.__setattr__(self, "full", g)


@dataclass(frozen=True)
class FrameTransform:
    """Vielbein matrices per node.

    ``forward[..., mu, beta]`` is ``A`` with coordinate metric ``A G A^T`` and
    ``inverse`` is ``A^{-1}``, whose rows give the frame vectors:
    ``e_beta = inverse[..., beta, nu] d_nu``.
    """

    chart: GridChart
    forward: np.ndarray
    inverse: np.ndarray


def safe_inverse(block: np.ndarray, what: str = "metric") -> np.ndarray:
    """Inverse of a stack of small symmetric matrices.

    Rejects blocks whose condition number exceeds ``CONDITION_LIMIT`` (or that
    are singular or non-finite).
    """
    if not np.all(np.isfinite(block)):
        raise DegenerateMetric(f"degenerate {what} metric: non-finite entries")
    ev = np.abs(np.linalg.eigvalsh(block))
    lo, hi = ev.min(axis=-1), ev.max(axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = np.where(lo > 0, hi / lo, np.inf)
    if not np.all(np.isfinite(cond)) or np.max(cond) > CONDITION_LIMIT:
        raise DegenerateMetric(f"degenerate {what} metric: condition number {np.max(cond):.3g}")
    return np.linalg.inv(block)


# --------------------------------------------------------------------------
# frame derivatives


def frame_derivatives(field: np.ndarray, N: NConnectionField, order: FractionalOrder | float) -> np.ndarray:
    """All adapted derivatives ``e_beta`` of a field, appended as the last index.

    ``field`` has the chart grid as leading dims; any trailing component dims
    are kept.  Horizontal directions get ``d_j - N_j^a d_a`` applied
    component-wise.
    """
    chart = N.chart
    P = all_partials(field, chart, order)
    n = chart.n
    extra = P.ndim - chart.dim - 1
    Nc = N.coefficients.reshape(chart.shape + (1,) * extra + (chart.n, chart.m))
    out = P.copy()
    out[..., :n] -= np.einsum("...ja,...a->...j", Nc, P[..., n:])
    return out


def nadapted_derivative(f: np.ndarray, direction: int, N: NConnectionField, order: FractionalOrder | float) -> np.ndarray:
    """``e_beta f`` for a single frame direction ``beta`` (global index)."""
    if not 0 <= direction < N.chart.dim:
        raise IndexError(f"frame index {direction} out of range for dimension {N.chart.dim}")
    return frame_derivatives(f, N, order)[..., direction]


def vertical_partials_of_N(N: NConnectionField, order: FractionalOrder | float) -> np.ndarray:
    """``dN[..., i, a, b] = d_b N_i^a`` for vertical directions ``b``."""
    P = all_partials(N.coefficients, N.chart, order)
    return P[..., N.chart.n:]


@dataclass(frozen=True)
class Anholonomy:
    """Structure functions of the adapted frame.

    ``W[..., mu, gamma, delta]`` satisfies ``[e_gamma, e_delta] = W^mu_{gamma delta} e_mu``.
    ``omega[..., i, j, a]`` is ``Omega^a_ij = e_j N_i^a - e_i N_j^a``.
    """

    W: np.ndarray
    omega: np.ndarray


def anholonomy(N: NConnectionField, order: FractionalOrder | float) -> Anholonomy:
    chart = N.chart
    n, m, d = chart.n, chart.m, chart.dim
    eN = frame_derivatives(N.coefficients, N, order)  # [..., i, a, beta] = e_beta N_i^a
    eh = eN[..., :n]  # [..., i, a, j] = e_j N_i^a
    omega = np.einsum("...iaj->...ija", eh) - np.einsum("...jai->...ija", eh)
    dvN = eN[..., n:]  # [..., i, a, b] = d_b N_i^a
    W = np.zeros(chart.shape + (d, d, d))
    W[..., n:, :n, :n] = np.einsum("...ija->...aij", omega)
    W[..., n:, :n, n:] = np.einsum("...iab->...aib", dvN)
    W[..., n:, n:, :n] = -np.einsum("...iab->...abi", dvN)
    return Anholonomy(W=W, omega=omega)


def vielbein(N: NConnectionField) -> FrameTransform:
    chart = N.chart
    n, d = chart.n, chart.dim
    A = np.broadcast_to(np.eye(d), chart.shape + (d, d)).copy()
    B = A.copy()
    A[..., :n, n:] = N.coefficients
    B[..., :n, n:] = -N.coefficients
    return FrameTransform(chart, A, B)


def dmetric_to_coordinate(g: DMetric, N: NConnectionField) -> CoordinateMetric:
    chart = _require_chart(g, N)
    n, d = chart.n, chart.dim
    Nc = N.coefficients
    full = np.zeros(chart.shape + (d, d))
    Ng = np.einsum("...ie,...be->...ib", Nc, g.v)
    full[..., :n, :n] = g.h + np.einsum("...ia,...jb,...ab->...ij", Nc, Nc, g.v)
    full[..., :n, n:] = Ng
    full[..., n:, :n] = np.swapaxes(Ng, -1, -2)
    full[..., n:, n:] = g.v
    return CoordinateMetric(chart, full)


def coordinate_to_dmetric(G: CoordinateMetric) -> tuple[DMetric, NConnectionField]:
    chart = G.chart
    n = chart.n
    gv = G.full[..., n:, n:]
    try:
        gv_inv = safe_inverse(gv, "vertical")
    except DegenerateMetric as exc:
        raise DegenerateMetric("degenerate vertical metric") from exc
    Nc = np.einsum("...ib,...be->...ie", G.full[..., :n, n:], gv_inv)
    gh = G.full[..., :n, :n] - np.einsum("...ia,...jb,...ab->...ij", Nc, Nc, gv)
    gh = 0.5 * (gh + np.swapaxes(gh, -1, -2))
    return DMetric(chart, gh, 0.5 * (gv + np.swapaxes(gv, -1, -2))), NConnectionField(chart, Nc)


def push_connection(gamma: np.ndarray, frame: FrameTransform, order: FractionalOrder | float) -> np.ndarray:
    """Express frame connection coefficients in the coordinate frame.

    With ``nabla_{e_gamma} e_beta = Gamma^alpha_{beta gamma} e_alpha`` the result
    satisfies ``nabla_{d_mu} d_nu = G^lambda_{nu mu} d_lambda``.
    """
    A, B = frame.forward, frame.inverse
    dA = all_partials(A, frame.chart, as_order(order))  # [..., nu, beta, mu] = d_mu A[nu, beta]
    term1 = np.einsum("...nbm,...bl->...lnm", dA, B)
    term2 = np.einsum("...mc,...nb,...abc,...al->...lnm", A, A, gamma, B)
    return term1 + term2


def push_covariant(T: np.ndarray, frame: FrameTransform) -> np.ndarray:
    """Coordinate components ``A[mu, beta] A[nu, delta] T[beta, delta]`` of a 2-tensor."""
    A = frame.forward
    return np.einsum("...mb,...nd,...bd->...mn", A, A, T)
