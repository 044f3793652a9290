"""Residual checks for candidate weak solutions.

The Hamilton-Jacobi clauses use the cell Hamiltonian of ``functionals``
(average over one-sided quotients) or, when an exact gradient ``du`` is
supplied, ``H(x, du)`` at the cell centres.  The supersolution check is a
discrete PROXY, not a viscosity test; it always works from one-sided
difference quotients because an a.e. gradient cannot see kinks.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage

from .errors import UsageError
from .functionals import _values, cell_hamiltonian
from .grid import CELL, FACE, Field, divergence_array, one_sided_differences, sobolev_h1_norm


@dataclass
class ResidualReport:
    """Violations of each clause of the weak-solution definition (all >= 0)."""

    eq_residual_on_support: float
    subsol_violation: float
    fp_residual: float
    mass_error: float
    supersol_violation: float
    h1_norm_m: float
    mode: str = "discount"
    m_threshold: float = 0.0
    support_cells: int = 0

    def to_dict(self) -> dict:
        out = asdict(self)
        out["supersol_check"] = "discrete proxy"
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def passes(self, tol_eq=5e-3, tol_subsol=1e-6, tol_fp=1e-6, tol_mass=1e-6) -> bool:
        return (self.eq_residual_on_support <= tol_eq and self.subsol_violation <= tol_subsol
                and self.fp_residual <= tol_fp and self.mass_error <= tol_mass)


def _xs(grid):
    x = grid.cell_centers()
    return x[..., 0] if grid.d == 1 else x


def weak_solution_residuals(spec, grid, u, m, w, mode="discount", epsilon=None, lam=None,
                            du=None, m_threshold=None) -> ResidualReport:
    """Quantify the weak-solution clauses for (u, m, w).

    ``mode="discount"`` needs ``epsilon`` and checks
    ``eps u + H = f(m)`` on ``{m > m_threshold}``, ``eps u + H <= f(m)``
    everywhere and ``eps m + div w = eps``; ``mode="ergodic"`` uses ``lam``
    with ``H = f(m) + lam`` and ``div w = 0``.  ``m_threshold`` defaults to
    ``1e-6 max(m)``.
    """
    uv = _values(u, CELL, grid, "u")
    mv = _values(m, CELL, grid, "m")
    wv = _values(w, FACE, grid, "w")
    if mode == "discount":
        if epsilon is None or not epsilon > 0:
            raise UsageError("discount mode needs a positive epsilon")
        shift, eps = epsilon * uv, float(epsilon)
    elif mode == "ergodic":
        if lam is None:
            raise UsageError("ergodic mode needs lam")
        shift, eps = -float(lam) * np.ones_like(uv), 0.0
    else:
        raise UsageError(f"mode must be 'discount' or 'ergodic', got {mode!r}")
    x = _xs(grid)
    lhs = shift + cell_hamiltonian(spec, grid, uv, du)
    rhs = spec.f(x, mv)
    thr = 1e-6 * float(np.max(mv)) if m_threshold is None else float(m_threshold)
    support = mv > thr
    gap = lhs - rhs
    eq = float(np.max(np.abs(gap[support]))) if np.any(support) else 0.0
    sub = float(max(0.0, np.max(gap)))
    fp = eps * mv + divergence_array(wv, grid.h) - eps
    fp_res = float(np.sqrt(grid.cell_volume * np.sum(fp**2)))
    mass = abs(grid.cell_volume * float(np.sum(mv)) - 1.0)
    target = spec.g(x) - shift  # H(x, Du) >= f(x, 0) - eps u   (or f(x, 0) + lam)
    sup_v = supersolution_proxy(spec, grid, uv, target)
    return ResidualReport(
        eq_residual_on_support=eq,
        subsol_violation=sub,
        fp_residual=fp_res,
        mass_error=mass,
        supersol_violation=sup_v,
        h1_norm_m=sobolev_h1_norm(Field(CELL, mv, grid)),
        mode=mode,
        m_threshold=thr,
        support_cells=int(np.sum(support)),
    )


def _axis_min(kappa, r, lo, hi):
    """min of kappa |p|^r over [lo, hi] (lo <= hi)."""
    return kappa * np.abs(np.clip(0.0, lo, hi)) ** r


def _axis_max3(kappa, r, a, b):
    return kappa * np.maximum.reduce([np.abs(a) ** r, np.abs(b) ** r, np.abs(0.5 * (a + b)) ** r])


def supersolution_proxy(spec, grid, u, rhs) -> float:
    """Sup over cells of ``(rhs - H_witness)_+``.

    Per axis, where the backward quotient does not exceed the forward one
    (smooth or convex-corner cell) the witness is the minimum of the kinetic
    term over ``[p-, p+]``, the discrete subdifferential.  Where ``p- > p+``
    (concave corner, empty subdifferential) it is the maximum over
    ``{p-, p+, (p- + p+)/2}``.  Callback Hamiltonians use the three-point
    maximum with full momentum vectors.
    """
    uv = _values(u, CELL, grid, "u")
    rhs = np.broadcast_to(np.asarray(rhs, dtype=float), grid.shape)
    x = _xs(grid)
    bwd, fwd = one_sided_differences(uv, grid.h)
    if spec.hamiltonian.is_power and (grid.d == 1 or spec.r == 2.0):
        kappa, r = spec.hamiltonian.kappa, spec.r
        kin = np.zeros(grid.shape)
        for k in range(grid.d):
            lo, hi = bwd[k], fwd[k]
            kin += np.where(lo <= hi, _axis_min(kappa, r, lo, hi), _axis_max3(kappa, r, lo, hi))
        val = kin + spec.V(x)
    else:
        cands = [bwd, fwd, 0.5 * (bwd + fwd)]
        val = np.max([spec.H(x, c[0] if grid.d == 1 else np.moveaxis(c, 0, -1)) for c in cands], axis=0)
    return float(max(0.0, np.max(rhs - val)))


def periodic_dilate(mask: np.ndarray) -> np.ndarray:
    """One-cell dilation along every axis with periodic wrap."""
    out = mask.copy()
    for k in range(mask.ndim):
        out |= np.roll(mask, 1, axis=k) | np.roll(mask, -1, axis=k)
    return out


def uniqueness_set(spec, grid, m, lam, m_threshold=None, tol_geom=1e-12) -> np.ndarray:
    """Boolean cell mask of ``{H(x,0) - lam - f(x,0) >= 0}`` united with the
    closure of ``{m > threshold}`` (realised as a one-cell dilation)."""
    mv = _values(m, CELL, grid, "m")
    x = _xs(grid)
    first = spec.H0(x) - lam - spec.g(x) >= -tol_geom
    thr = 1e-6 * float(np.max(mv)) if m_threshold is None else float(m_threshold)
    return first | periodic_dilate(mv > thr)


def periodic_components(mask: np.ndarray):
    """Label connected components of ``mask`` on the torus; returns (labels, count)."""
    labels, count = ndimage.label(mask)
    parent = list(range(count + 1))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for k in range(mask.ndim):
        first = np.take(labels, 0, axis=k)
        last = np.take(labels, -1, axis=k)
        for a, b in zip(first.ravel(), last.ravel()):
            if a and b:
                ra, rb = find(a), find(b)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
    roots = np.array([find(i) for i in range(count + 1)])
    uniq = {r: i for i, r in enumerate(sorted(set(roots[1:])), start=1)}
    relabel = np.array([0] + [uniq[r] for r in roots[1:]])
    return relabel[labels], len(uniq)


def zeta_agreement(u1: Field, u2: Field, mask: np.ndarray) -> float:
    """Sup over the mask of ``|u1 - u2 - c_j|`` with the best constant ``c_j``
    per connected component ``j`` of the mask."""
    diff = np.asarray(u1) - np.asarray(u2)
    labels, count = periodic_components(np.asarray(mask, bool))
    worst = 0.0
    for j in range(1, count + 1):
        vals = diff[labels == j]
        worst = max(worst, 0.5 * float(vals.max() - vals.min()))
    return worst


def h1_monitor(fields) -> dict:
    """H1 norms of a sequence of densities and the ratio max/min."""
    norms = [sobolev_h1_norm(f) for f in fields]
    return {"norms": norms, "ratio": max(norms) / min(norms) if norms and min(norms) > 0 else float("inf")}
