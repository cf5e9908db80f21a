"""Left Caputo and Riemann-Liouville operators on uniform grids.

All one-dimensional operators are represented as dense lower-triangular
matrices acting on nodal samples.  They are cached per (count, spacing, alpha)
so repeated axis sweeps over a multi-dimensional chart reuse the same weights.

Conventions
-----------
* The Caputo derivative uses the L1 scheme: the sample sequence is replaced by
  its piecewise-linear interpolant and integrated exactly against the kernel
  ``(x - s)^(-alpha) / Gamma(1 - alpha)``.  Because the scheme acts on first
  differences, constants are annihilated exactly.
* The RL integral uses product-trapezoid weights (piecewise-linear interpolant
  integrated exactly against ``(x - s)^(alpha - 1) / Gamma(alpha)``).
* ``alpha == 1`` dispatches to classical second-order finite differences and
  the running trapezoid integral.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import TYPE_CHECKING

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.special import gamma

from .errors import GridError, InvalidSamples

if TYPE_CHECKING:  # pragma: no cover
    from .geometry import GridChart


@dataclass(frozen=True)
class FractionalOrder:
    """Order ``alpha`` of a fractional operator, restricted to (0, 1]."""

    alpha: float

    def __post_init__(self):
        a = float(self.alpha)
        if not np.isfinite(a) or not (0.0 < a <= 1.0):
            raise ValueError(f"fractional order must lie in (0, 1], got {self.alpha!r}")
        object.__setattr__(self, "alpha", a)

    @property
    def is_integer(self) -> bool:
        return self.alpha == 1.0


def as_order(order: FractionalOrder | float) -> FractionalOrder:
    if isinstance(order, FractionalOrder):
        return order
    return FractionalOrder(float(order))


@dataclass(frozen=True)
class AxisGrid:
    """Uniform nodes on ``[lower, upper]``.

    For a periodic axis the upper end is identified with the lower one and is
    not stored, so ``spacing = (upper - lower) / count``.  Periodicity only
    changes the classical (``alpha == 1``) stencils; fractional operators still
    see the nodes as a plain segment starting at ``lower``.
    """

    lower: float
    upper: float
    count: int
    periodic: bool = False

    def __post_init__(self):
        if int(self.count) != self.count or self.count < 1:
            raise GridError(f"count must be a positive integer, got {self.count!r}")
        if not (np.isfinite(self.lower) and np.isfinite(self.upper)) or self.upper <= self.lower:
            raise GridError("axis bounds must be finite with upper > lower")
        object.__setattr__(self, "count", int(self.count))
        object.__setattr__(self, "lower", float(self.lower))
        object.__setattr__(self, "upper", float(self.upper))

    @property
    def spacing(self) -> float:
        if self.periodic:
            return (self.upper - self.lower) / self.count
        return (self.upper - self.lower) / (self.count - 1) if self.count > 1 else self.upper - self.lower

    @property
    def nodes(self) -> np.ndarray:
        return self.lower + self.spacing * np.arange(self.count)

    def require(self, minimum: int = 3) -> None:
        if self.count < minimum:
            raise GridError(f"grid too small: {self.count} nodes, need at least {minimum}")


@dataclass(frozen=True)
class SampledCurve:
    """Nodal samples of a real function on an :class:`AxisGrid`."""

    grid: AxisGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.count,):
            raise GridError(f"expected {self.grid.count} samples, got shape {vals.shape}")
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_function(cls, grid: AxisGrid, func) -> "SampledCurve":
        return cls(grid, np.asarray(func(grid.nodes), dtype=float))


# --------------------------------------------------------------------------
# weight matrices


@lru_cache(maxsize=64)
def l1_weights(count: int, spacing: float, alpha: float) -> np.ndarray:
    """Matrix ``B`` of shape ``(count, count - 1)`` acting on forward differences.

    ``B @ diff(f)`` is the L1 Caputo derivative at every node.  Working on the
    differences makes the derivative of a constant exactly zero.
    """
    j = np.arange(count - 1, dtype=float)
    b = (j + 1.0) ** (1.0 - alpha) - j ** (1.0 - alpha)
    # B[n, k] = b[n - 1 - k] for k < n.
    idx = np.arange(count)[:, None] - 1 - np.arange(count - 1)[None, :]
    B = np.where(idx >= 0, b[np.clip(idx, 0, None)], 0.0)
    B *= spacing ** (-alpha) / gamma(2.0 - alpha)
    B.setflags(write=False)
    return B


@lru_cache(maxsize=64)
def l1_matrix(count: int, spacing: float, alpha: float) -> np.ndarray:
    """Matrix ``D`` with ``D @ f`` the L1 Caputo derivative at every node."""
    B = l1_weights(count, spacing, alpha)
    D = np.zeros((count, count))
    D[:, 1:] += B
    D[:, :-1] -= B
    D.setflags(write=False)
    return D


@lru_cache(maxsize=64)
def rl_integral_matrix(count: int, spacing: float, alpha: float) -> np.ndarray:
    """Product-trapezoid matrix for the left RL integral of order ``alpha``."""
    M = np.zeros((count, count))
    for n in range(1, count):
        k = np.arange(1, n, dtype=float)
        M[n, 0] = (n - 1.0) ** (alpha + 1.0) - (n - 1.0 - alpha) * n**alpha
        M[n, 1:n] = (n - k + 1.0) ** (alpha + 1.0) - 2.0 * (n - k) ** (alpha + 1.0) + (n - k - 1.0) ** (alpha + 1.0)
        M[n, n] = 1.0
    M *= spacing**alpha / gamma(alpha + 2.0)
    M.setflags(write=False)
    return M


@lru_cache(maxsize=64)
def classical_derivative_matrix(count: int, spacing: float, periodic: bool) -> np.ndarray:
    """Second-order first-derivative matrix (central inside, one-sided at ends)."""
    D = np.zeros((count, count))
    if periodic:
        for i in range(count):
            D[i, (i + 1) % count] += 0.5 / spacing
            D[i, (i - 1) % count] -= 0.5 / spacing
    else:
        D[0, :3] = np.array([-1.5, 2.0, -0.5]) / spacing
        D[-1, -3:] = np.array([0.5, -2.0, 1.5]) / spacing
        for i in range(1, count - 1):
            D[i, i - 1] = -0.5 / spacing
            D[i, i + 1] = 0.5 / spacing
    D.setflags(write=False)
    return D


def derivative_matrix(grid: AxisGrid, order: FractionalOrder | float) -> np.ndarray:
    """Caputo derivative matrix for ``grid`` (classical when ``alpha == 1``)."""
    a = as_order(order).alpha
    grid.require(3)
    if a == 1.0:
        return classical_derivative_matrix(grid.count, grid.spacing, grid.periodic)
    return l1_matrix(grid.count, grid.spacing, a)


def apply_derivative(grid: AxisGrid, order: FractionalOrder | float, values: np.ndarray, axis: int = 0) -> np.ndarray:
    """Caputo derivative of ``values`` along ``axis`` sampled on ``grid``."""
    a = as_order(order).alpha
    grid.require(3)
    if a == 1.0:
        return _classical_stencil(values, axis, grid.spacing, grid.periodic)
    return apply_along(l1_weights(grid.count, grid.spacing, a), np.diff(values, axis=axis), axis)


def _classical_stencil(values: np.ndarray, axis: int, h: float, periodic: bool) -> np.ndarray:
    """Same stencil as ``classical_derivative_matrix`` written on differences.

    Built from differences of samples, so constants give exactly zero.
    """
    v = np.moveaxis(np.asarray(values, dtype=float), axis, 0)
    if periodic:
        out = (np.roll(v, -1, axis=0) - np.roll(v, 1, axis=0)) * (0.5 / h)
    else:
        out = np.empty_like(v)
        out[1:-1] = (v[2:] - v[:-2]) * (0.5 / h)
        out[0] = (2.0 * (v[1] - v[0]) - 0.5 * (v[2] - v[0])) / h
        out[-1] = (2.0 * (v[-1] - v[-2]) - 0.5 * (v[-1] - v[-3])) / h
    return np.moveaxis(out, 0, axis)


def quadrature_weights(grid: AxisGrid, order: FractionalOrder | float) -> np.ndarray:
    """Weights ``w`` with ``w @ f`` approximating the order-``alpha`` integral over the axis.

    For ``alpha < 1`` this is the RL integral evaluated at the upper node, i.e.
    the kernel ``(upper - s)^(alpha - 1) / Gamma(alpha)``.  At ``alpha == 1`` it
    is the trapezoid rule (rectangle rule on periodic axes).
    """
    a = as_order(order).alpha
    grid.require(3)
    h = grid.spacing
    if a == 1.0:
        if grid.periodic:
            return np.full(grid.count, h)
        w = np.full(grid.count, h)
        w[0] = w[-1] = 0.5 * h
        return w
    return np.array(rl_integral_matrix(grid.count, h, a)[-1])


# --------------------------------------------------------------------------
# one-dimensional operators


def _checked(f: SampledCurve) -> np.ndarray:
    f.grid.require(3)
    if not np.all(np.isfinite(f.values)):
        raise InvalidSamples("invalid samples: non-finite values in input")
    return f.values


def caputo_left(f: SampledCurve, order: FractionalOrder | float) -> SampledCurve:
    """Left Caputo derivative with terminal at ``f.grid.lower``."""
    vals = _checked(f)
    return SampledCurve(f.grid, apply_derivative(f.grid, order, vals))


def rl_integral_left(f: SampledCurve, order: FractionalOrder | float) -> SampledCurve:
    """Left RL integral; zero at the terminal node."""
    vals = _checked(f)
    a = as_order(order).alpha
    if a == 1.0:
        out = cumulative_trapezoid(vals, dx=f.grid.spacing, initial=0.0)
    else:
        out = rl_integral_matrix(f.grid.count, f.grid.spacing, a) @ vals
    return SampledCurve(f.grid, out)


def rl_derivative_left(f: SampledCurve, order: FractionalOrder | float) -> SampledCurve:
    """Left RL derivative, via the Caputo result plus the terminal-value term.

    The term ``f(lower) (x - lower)^(-alpha) / Gamma(1 - alpha)`` is singular at
    the terminal node, so the first entry is ``+-inf`` whenever ``f(lower) != 0``
    (and 0 otherwise).  Provided for cross-checking only.
    """
    vals = _checked(f)
    a = as_order(order).alpha
    cap = apply_derivative(f.grid, a, vals)
    if a == 1.0:
        return SampledCurve(f.grid, cap)
    dx = f.grid.nodes - f.grid.lower
    extra = np.zeros_like(dx)
    f0 = vals[0]
    if f0 != 0.0:
        with np.errstate(divide="ignore"):
            extra = f0 * dx ** (-a) / gamma(1.0 - a)
    return SampledCurve(f.grid, cap + extra)


def fundamental_theorem_residual(f: SampledCurve, order: FractionalOrder | float) -> float:
    """Max-norm of ``I^alpha(D^alpha f) - (f - f(lower))``."""
    back = rl_integral_left(caputo_left(f, order), order)
    return float(np.max(np.abs(back.values - (f.values - f.values[0]))))


# --------------------------------------------------------------------------
# axis-wise operators on charts


def apply_along(matrix: np.ndarray, values: np.ndarray, axis: int) -> np.ndarray:
    """Apply a 1D operator matrix along ``axis`` of ``values``."""
    out = np.tensordot(matrix, values, axes=([1], [axis]))
    return np.moveaxis(out, 0, axis)


def partial(values: np.ndarray, chart: "GridChart", axis: int, order: FractionalOrder | float) -> np.ndarray:
    """Axis-wise Caputo derivative of a field whose leading dims are the chart grid.

    Trailing dimensions (tensor components) are carried along untouched.
    """
    values = np.asarray(values, dtype=float)
    if values.shape[: chart.dim] != chart.shape:
        raise GridError(f"field shape {values.shape} does not start with chart shape {chart.shape}")
    if not np.all(np.isfinite(values)):
        raise InvalidSamples("invalid samples: non-finite values in field")
    return apply_derivative(chart.axes[axis], order, values, axis)


def all_partials(values: np.ndarray, chart: "GridChart", order: FractionalOrder | float) -> np.ndarray:
    """Stack of ``partial`` over every chart axis, appended as the last index."""
    return np.stack([partial(values, chart, k, order) for k in range(chart.dim)], axis=-1)


@dataclass(frozen=True)
class FormField:
    """Differential form with coefficients on a chart.

    ``coefficients`` has shape ``chart.shape + (d,) * degree`` with
    ``d = chart.dim``.  A 2-form stores the antisymmetric array ``w`` with
    ``omega = 1/2 w[j, i] (dx^j)^alpha ^ (dx^i)^alpha``.
    """

    chart: "GridChart"
    degree: int
    coefficients: np.ndarray

    def __post_init__(self):
        if self.degree not in (0, 1, 2):
            raise ValueError("degree must be 0, 1 or 2")
        c = np.asarray(self.coefficients, dtype=float)
        expected = self.chart.shape + (self.chart.dim,) * self.degree
        if c.shape != expected:
            raise GridError(f"coefficients shape {c.shape}, expected {expected}")
        if self.degree == 2 and not np.allclose(c, -np.swapaxes(c, -1, -2), rtol=0.0, atol=1e-12):
            raise ValueError("2-form coefficients must be antisymmetric")
        object.__setattr__(self, "coefficients", c)


def frac_grad(f: np.ndarray, chart: "GridChart", order: FractionalOrder | float) -> FormField:
    """Fractional gradient: component ``i`` is the Caputo derivative along axis ``i``."""
    return FormField(chart, 1, all_partials(f, chart, order))


def frac_div(V: np.ndarray, chart: "GridChart", order: FractionalOrder | float, eta=None) -> np.ndarray:
    """Fractional divergence ``sum_i D_i V^i`` for a flat diagonal metric ``eta``.

    ``V`` has shape ``chart.shape + (dim,)``.  ``eta`` (diagonal entries of
    +-1) is only validated: in Cartesian-like charts it does not enter the
    divergence of a contravariant field.
    """
    V = np.asarray(V, dtype=float)
    if V.shape != chart.shape + (chart.dim,):
        raise GridError(f"vector field shape {V.shape} does not match chart")
    if eta is not None:
        eta = np.asarray(eta, dtype=float)
        if eta.shape != (chart.dim,) or not np.all(np.abs(eta) == 1.0):
            raise ValueError("eta must be a diagonal of +-1 entries")
    return sum(partial(V[..., i], chart, i, order) for i in range(chart.dim))


def exterior_derivative(omega: FormField, order: FractionalOrder | float) -> FormField:
    """Fractional exterior derivative of a 0-form or 1-form."""
    chart = omega.chart
    if omega.degree == 0:
        return frac_grad(omega.coefficients, chart, order)
    if omega.degree == 1:
        # dF[..., i, j] = D_j F_i, and the coefficient w[j, i] on
        # dx^j ^ dx^i is D_j F_i - D_i F_j.
        dF = all_partials(omega.coefficients, chart, order)
        return FormField(chart, 2, np.swapaxes(dF, -1, -2) - dF)
    raise GridError("top degree at desk scale: exterior derivative of a 2-form is not supported")
