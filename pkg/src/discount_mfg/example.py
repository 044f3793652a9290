"""Closed-form oracles for the triangle-wave example.

With H = |p|^2/2 + W(x) and f(m) = m the ergodic problem has lambda = 0,
m = max(W, 0), and a one-parameter family of weak solutions u^theta,
theta in [1/8, 3/8], whose slope is +-sqrt(2 max(-W, 0)) with the sign
switching at x = theta (and at 1 - theta by symmetry).  The selection
functional  int <u^theta> m  is minimised uniquely at theta = 1/4.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, UsageError

THETA_MIN = 0.125
THETA_MAX = 0.375
SELECTED_THETA = 0.25
SUPPORT = ((0.0, 0.125), (0.375, 0.625), (0.875, 1.0))

_A = 0.125 ** 1.5 * 32.0 / 3.0  # (32/3) (1/8)^(3/2)


def example_potential(x):
    """Triangle wave: 4 at x = 0, 1/2; -4 at x = 1/4, 3/4; slopes +-32."""
    y = np.mod(np.asarray(x, dtype=float), 0.5)
    return np.where(y <= 0.25, 4.0 - 32.0 * y, 32.0 * y - 12.0)


def example_density(x):
    return np.maximum(example_potential(x), 0.0)


def example_lambda() -> float:
    return 0.0


def _check_theta(theta):
    if not (THETA_MIN <= theta <= THETA_MAX):
        raise DomainError(f"theta must lie in [1/8, 3/8], got {theta}")
    return float(theta)


def _fold(x):
    """Map x onto [0, 1/2] using the symmetry u(1 - x) = u(x)."""
    y = np.mod(np.asarray(x, dtype=float), 1.0)
    return np.where(y > 0.5, 1.0 - y, y)


def _pos15(z):
    return np.power(np.maximum(z, 0.0), 1.5)


def example_u_theta(theta, x, C=0.0):
    """u^theta(x) + C with u^theta(0) = 0."""
    t = _check_theta(theta)
    y = _fold(x)
    k = 16.0 / 3.0
    if t <= 0.25:
        top = 2 * k * _pos15(t - 0.125)
        plateau = top - _A
        branches = [
            np.zeros_like(y),
            k * _pos15(y - 0.125),
            top - k * _pos15(y - 0.125),
            plateau + k * _pos15(0.375 - y),
            np.full_like(y, plateau),
        ]
        cuts = [0.125, t, 0.25, 0.375]
    else:
        low = -2 * k * _pos15(0.375 - t) + _A
        branches = [
            np.zeros_like(y),
            k * _pos15(y - 0.125),
            -k * _pos15(0.375 - y) + _A,
            low + k * _pos15(0.375 - y),
            np.full_like(y, low),
        ]
        cuts = [0.125, 0.25, t, 0.375]
    conds = [y <= cuts[0], y <= cuts[1], y <= cuts[2], y <= cuts[3], np.ones_like(y, bool)]
    return np.select(conds, branches) + C


def example_u_theta_derivative(theta, x):
    """Slope sqrt(2 max(-W, 0)), positive on (1/8, theta) and (5/8, 1 - theta)."""
    t = _check_theta(theta)
    y = np.mod(np.asarray(x, dtype=float), 1.0)
    mag = np.sqrt(2.0 * np.maximum(-example_potential(y), 0.0))
    plus = ((y > 0.125) & (y < t)) | ((y > 0.625) & (y < 1.0 - t))
    minus = ((y > t) & (y < 0.375)) | ((y > 1.0 - t) & (y < 0.875))
    return mag * (plus.astype(float) - minus.astype(float))


def example_v_theta(theta, x, C=0.0):
    """Reflected solution -u^theta + C: a weak solution that fails the supersolution test."""
    return -example_u_theta(theta, x) + C


def example_v_theta_derivative(theta, x):
    return -example_u_theta_derivative(theta, x)


@dataclass(frozen=True)
class ThetaFamily:
    """Member ``u^theta + C`` of the closed-form solution family."""

    theta: float = SELECTED_THETA
    C: float = 0.0

    def __post_init__(self):
        _check_theta(self.theta)

    def __call__(self, x):
        return example_u_theta(self.theta, x, self.C)

    def derivative(self, x):
        return example_u_theta_derivative(self.theta, x)


# ---------------------------------------------------------------------------
# quadrature


def _panels(theta):
    t = float(theta)
    pts = sorted({0.0, 0.125, t, 0.25, 0.375, 0.5, 0.625, 1.0 - t, 0.75, 0.875, 1.0})
    return list(zip(pts[:-1], pts[1:]))


def _rule(npts):
    nodes, weights = np.polynomial.legendre.leggauss(npts)
    s = 0.5 * (nodes + 1.0)
    # the smoothstep change of variables absorbs the (x - a)^(3/2) endpoint behaviour
    return 3 * s**2 - 2 * s**3, 0.5 * weights * 6 * s * (1 - s)


def panel_quadrature(func, panels, npts=48):
    """Composite Gauss-Legendre over ``panels`` with endpoint clustering."""
    xi, wi = _rule(npts)
    total = 0.0
    for a, b in panels:
        if b > a:
            total += (b - a) * float(np.dot(wi, func(a + (b - a) * xi)))
    return total


def example_u_theta_mean(theta) -> float:
    return panel_quadrature(lambda x: example_u_theta(theta, x), _panels(theta))


def example_selection_value(theta) -> float:
    """Full-period value  int_0^1 <u^theta> m dx."""
    t = _check_theta(theta)
    mean = example_u_theta_mean(t)
    return panel_quadrature(lambda x: (example_u_theta(t, x) - mean) * example_density(x), _panels(t))


def example_selection_value_half(theta) -> float:
    """Half-period value  int_0^(1/2) <u^theta> m = u^theta(3/8)/4 - int_0^(1/2) u^theta.

    The full-period value is twice this by symmetry about x = 1/2.
    """
    t = _check_theta(theta)
    half = [(a, b) for a, b in _panels(t) if b <= 0.5]
    return 0.25 * float(example_u_theta(t, 0.375)) - panel_quadrature(
        lambda x: example_u_theta(t, x), half
    )


def example_selection_derivative(theta) -> float:
    """d/dtheta of the half-period value: 16 (theta-1/8)^(1/2) (theta-1/4) for
    theta <= 1/4 and 16 (3/8-theta)^(1/2) (theta-1/4) above.

    The full-period derivative is twice this.
    """
    t = _check_theta(theta)
    if t <= 0.25:
        return 16.0 * np.sqrt(t - 0.125) * (t - 0.25)
    return 16.0 * np.sqrt(0.375 - t) * (t - 0.25)


def theta_grid(count: int) -> np.ndarray:
    if count < 2:
        raise UsageError(f"theta grid needs at least two points, got {count}")
    return np.linspace(THETA_MIN, THETA_MAX, int(count))


def selection_study(count: int = 65):
    """Values and derivatives on a uniform theta grid plus the discrete argmin."""
    thetas = theta_grid(count)
    values = np.array([example_selection_value(t) for t in thetas])
    derivs = np.array([example_selection_derivative(t) for t in thetas])
    return {
        "theta": thetas,
        "value": values,
        "derivative_half": derivs,
        "argmin": float(thetas[int(np.argmin(values))]),
        "step": float(thetas[1] - thetas[0]),
    }


# ---------------------------------------------------------------------------
# grid samples


def _require_1d(grid):
    if grid.d != 1:
        raise UsageError("the worked example is one-dimensional")


def example_selected_limit(grid):
    """u^(1/4) sampled at cell centres with its discrete mean removed."""
    from .grid import mean_zero

    _require_1d(grid)
    return mean_zero(grid.sample(lambda x: example_u_theta(SELECTED_THETA, x)))


def example_density_field(grid):
    _require_1d(grid)
    return grid.sample(example_density)


def example_fields(grid, theta=SELECTED_THETA, reflected=False):
    """(u, m, w, du) oracle fields; w = -m u_x vanishes identically.

    ``du`` is the exact slope at cell centres with shape ``(1, n)``.
    """
    _require_1d(grid)
    u_fn = example_v_theta if reflected else example_u_theta
    du_fn = example_v_theta_derivative if reflected else example_u_theta_derivative
    u = grid.sample(lambda x: u_fn(theta, x))
    m = grid.sample(example_density)
    du = grid.sample(lambda x: du_fn(theta, x)).values[None, :]
    w = grid.zeros("face_vector")
    return u, m, w, du


def example_spec():
    """H = |p|^2/2 + W, f(m) = m on the circle."""
    from .problem import Potential, power_spec

    return power_spec(kappa=0.5, r=2.0, V=Potential("example"), c_f=1.0, q=2.0)
