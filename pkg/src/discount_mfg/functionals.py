"""Discrete primal and dual functionals.

Cell Hamiltonian:  H_i(u) = average of H(x_i, p) over the 2^d choices of
one-sided difference quotients p_k in {D-_k u_i, D+_k u_i}.  For the power
family with r = 2 (or d = 1) this is  V_i + sum_k (K(D-_k u_i) + K(D+_k u_i)) / 2.

    A(u)    = sum_i h^d [F*(x_i, eps u_i + H_i(u)) - eps u_i]
    B(m, w) = sum_faces h^d mbar_f K*(|w_f| / mbar_f) + sum_i h^d [F(x_i, m_i) - V_i m_i]

with ``mbar_f`` the mean of the two cells sharing face f.  The pair is an
exact discrete dual: for every u and every (m, w) with eps m + div w = eps,
A(u) + B(m, w) >= 0, with equality at the saddle point.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .conjugates import coupling_conjugate, coupling_inverse, coupling_primitive, kinetic_conjugate
from .errors import DomainError, UsageError
from .grid import CELL, FACE, Field, divergence_array, face_average, gradient_array, one_sided_differences


def _values(obj, kind, grid, name):
    if isinstance(obj, Field):
        if obj.kind != kind:
            raise UsageError(f"{name} must be a {kind}, got {obj.kind}")
        if obj.grid != grid:
            raise UsageError(f"{name} lives on {obj.grid}, expected {grid}")
        return obj.values
    arr = np.asarray(obj, dtype=float)
    if arr.shape != grid.shape_for(kind):
        raise UsageError(f"{name} must have shape {grid.shape_for(kind)}, got {arr.shape}")
    return arr


def separable_kinetic(spec) -> bool:
    return spec.hamiltonian.is_power and (spec.dimension == 1 or spec.r == 2.0)


def axis_kinetic(spec, bwd, fwd) -> np.ndarray:
    """``sum_k (K(bwd_k) + K(fwd_k)) / 2`` with ``K(p) = kappa |p|^r`` per axis."""
    kappa, r = spec.hamiltonian.kappa, spec.r
    return 0.5 * kappa * sum(np.abs(bwd[k]) ** r + np.abs(fwd[k]) ** r for k in range(bwd.shape[0]))


def cell_hamiltonian(spec, grid, u, du=None) -> np.ndarray:
    """Per-cell discrete Hamiltonian of ``u``.

    ``du`` (a face-shaped array of exact gradients at cell centres, i.e. shape
    ``(d,) + grid.shape``) replaces both one-sided quotients when given.
    """
    uv = _values(u, CELL, grid, "u")
    x = grid.cell_centers()
    xs = x[..., 0] if grid.d == 1 else x
    if du is not None:
        g = _values(du, FACE, grid, "du")
        bwd = fwd = g
    else:
        bwd, fwd = one_sided_differences(uv, grid.h)
    if separable_kinetic(spec):
        return axis_kinetic(spec, bwd, fwd) + spec.V(xs)
    combos = list(itertools.product((0, 1), repeat=grid.d))
    total = np.zeros(grid.shape)
    for combo in combos:
        p = np.stack([(fwd if c else bwd)[k] for k, c in enumerate(combo)], axis=-1)
        total += spec.H(xs, p[..., 0] if grid.d == 1 else p)
    return total / len(combos)


def _cell_x(grid):
    x = grid.cell_centers()
    return x[..., 0] if grid.d == 1 else x


def evaluate_A(spec, grid, phi, eps, du=None) -> float:
    """``A^eps(phi) = sum h^d [F*(x, eps phi + H_i(phi)) - eps phi]``."""
    if not eps > 0:
        raise DomainError(f"epsilon must be positive, got {eps}")
    pv = _values(phi, CELL, grid, "phi")
    a = eps * pv + cell_hamiltonian(spec, grid, pv, du)
    return float(grid.cell_volume * np.sum(coupling_conjugate(spec, _cell_x(grid), a) - eps * pv))


def evaluate_A_ergodic(spec, grid, phi, lam, du=None) -> float:
    """``A(phi, lambda) = sum h^d [F*(x, -lambda + H_i(phi)) + lambda]``."""
    pv = _values(phi, CELL, grid, "phi")
    a = -lam + cell_hamiltonian(spec, grid, pv, du)
    return float(grid.cell_volume * np.sum(coupling_conjugate(spec, _cell_x(grid), a)) + lam)


def A_and_gradient(spec, grid, u, eps):
    """Value of ``A^eps`` and its gradient with respect to the cell values.

    The gradient is returned per unit cell volume, so it equals
    ``eps m - eps + div(-w)`` for the (m, w) implied by u; its vanishing is the
    discrete transport equation.
    """
    if not separable_kinetic(spec):
        spec.require_power("A_and_gradient")
        raise UsageError("gradient needs the axis-separable kinetic stencil (d = 1 or r = 2)")
    h = grid.h
    bwd, fwd = one_sided_differences(u, h)
    x = _cell_x(grid)
    a = eps * u + axis_kinetic(spec, bwd, fwd) + spec.V(x)
    m = coupling_inverse(spec, x, a)
    value = grid.cell_volume * float(np.sum(coupling_conjugate(spec, x, a) - eps * u))
    w = flux_from(spec, grid, m, bwd, fwd)
    grad = eps * m - eps + divergence_array(w, h)
    return value, grad, m, w


def kinetic_derivative(spec, p):
    """``K'(p)`` for ``K(p) = kappa |p|^r`` (componentwise)."""
    r, kappa = spec.r, spec.hamiltonian.kappa
    return kappa * r * np.sign(p) * np.power(np.abs(p), r - 1.0)


def flux_from(spec, grid, m, bwd, fwd):
    """``w_f = -(m_i K'(D+ u_i) + m_{i+1} K'(D- u_{i+1})) / 2`` on every face."""
    w = np.empty(grid.face_shape)
    for k in range(grid.d):
        w[k] = -0.5 * (m * kinetic_derivative(spec, fwd[k])
                       + np.roll(m * kinetic_derivative(spec, bwd[k]), -1, axis=k))
    return w


def evaluate_B(spec, grid, m, w) -> float:
    """Discrete ``B(m, w)``; ``math.inf`` when a face with zero mean density carries flux."""
    if not separable_kinetic(spec):
        raise UsageError("evaluate_B needs a power Hamiltonian (with r = 2 when d = 2)")
    mv = _values(m, CELL, grid, "m")
    wv = _values(w, FACE, grid, "w")
    if np.any(mv < 0):
        raise DomainError("density must be non-negative")
    mbar = face_average(mv)
    if np.any((mbar == 0) & (wv != 0)):
        return math.inf
    safe = np.where(mbar > 0, mbar, 1.0)
    kin = np.where(mbar > 0, mbar * kinetic_conjugate(spec, wv / safe), 0.0)
    x = _cell_x(grid)
    cell = coupling_primitive(spec, x, mv) - spec.V(x) * mv
    return float(grid.cell_volume * (np.sum(kin) + np.sum(cell)))


def constraint_residual(grid, eps, m, w) -> float:
    """Discrete L2 norm of ``eps m + div w - eps``."""
    mv = _values(m, CELL, grid, "m")
    wv = _values(w, FACE, grid, "w")
    res = eps * mv + divergence_array(wv, grid.h) - eps
    return float(np.sqrt(grid.cell_volume * np.sum(res**2)))


def _weighted_laplacian(grid, weight):
    """Sparse matrix of ``psi -> div(weight * grad psi)`` (weight on faces)."""
    d, h = grid.d, grid.h
    idx = np.arange(grid.size).reshape(grid.shape)
    rows, cols, vals = [], [], []
    for k in range(d):
        nb = np.roll(idx, -1, axis=k)
        wk = weight[k].ravel() / h**2
        a, b = idx.ravel(), nb.ravel()
        # face between a and b contributes wk (psi_b - psi_a) to a and -wk (psi_b - psi_a) to b
        rows += [a, a, b, b]
        cols += [b, a, a, b]
        vals += [wk, -wk, wk, -wk]
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(grid.size,) * 2
    )


def project_feasible(grid, eps, m, w):
    """Nearby pair satisfying ``eps m + div w = eps`` exactly (to rounding).

    Rescales m to unit mass, then removes the remaining residual with a flux
    correction ``mbar grad psi`` supported where the face density is positive.
    If some face density vanishes, the residual is absorbed into m instead
    (clipped at zero and renormalised, so feasibility is then approximate).
    Returns ``(m, w, method)``.
    """
    mv = np.maximum(_values(m, CELL, grid, "m"), 0.0)
    wv = np.array(_values(w, FACE, grid, "w"), dtype=float)
    mass = grid.cell_volume * mv.sum()
    if mass > 0:
        mv = mv / mass
    res = eps * mv + divergence_array(wv, grid.h) - eps
    res -= res.mean()
    weight = face_average(mv)
    if np.all(weight > 0):
        L = _weighted_laplacian(grid, weight).tocsc()
        psi = np.zeros(grid.size)
        psi[1:] = spla.spsolve(L[1:, 1:], -res.ravel()[1:])
        wv = wv + weight * gradient_array(psi.reshape(grid.shape), grid.h)
        return mv, wv, "flux"
    mv = np.maximum(mv - res / eps, 0.0)
    # clipping adds mass; restore unit mass at the cost of a small residual
    mass = grid.cell_volume * mv.sum()
    return (mv / mass if mass > 0 else mv), wv, "density"
