"""Vanishing-discount sweep, ergodic constant, selection functional.

As eps -> 0 the discounted solutions satisfy  eps int u^eps -> -lambda,
<u^eps> -> u  and  m^eps -> m.  The sweep solves a decreasing schedule of
discounts with warm starts and reads (u, m, lambda) off the last one.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize

from .conjugates import coupling_inverse
from .dual import DiscountSolution, SolverParams, solve_dual
from .errors import MFGError, NumericError, SweepError, UsageError
from .functionals import cell_hamiltonian, evaluate_A_ergodic
from .grid import CELL, Field, integrate, l1_norm, mean_zero, sobolev_h1_norm, sup_norm


@dataclass
class SweepRecord:
    """Per-discount diagnostics of a sweep."""

    epsilon: float
    lambda_estimate: float
    eps_integral_u: float
    gap: float
    relative_gap: float
    u_change_sup: float
    m_change_l1: float
    h1_norm_m: float
    iterations: int
    wall_time: float

    def as_row(self) -> dict:
        return dict(self.__dict__)


@dataclass
class ErgodicSolution:
    """Mean-zero potential, density and ergodic constant from a sweep."""

    u: Field
    m: Field
    lam: float
    sweep: list = field(default_factory=list)
    solutions: list = field(default_factory=list, repr=False)

    @property
    def final(self) -> Optional[DiscountSolution]:
        return self.solutions[-1] if self.solutions else None

    def summary(self) -> dict:
        return {"lambda": self.lam, "n": self.u.grid.n, "d": self.u.grid.d,
                "sweep": [r.as_row() for r in self.sweep]}


def geometric_schedule(eps0: float = 0.1, ratio: float = 0.5, count: int = 8) -> list:
    """``eps0 * ratio**k`` for k = 0 .. count-1."""
    if count < 1:
        raise UsageError("the schedule needs at least one discount")
    if not (eps0 > 0 and 0 < ratio < 1):
        raise UsageError("need eps0 > 0 and 0 < ratio < 1")
    return [eps0 * ratio**k for k in range(count)]


def _check_schedule(schedule):
    sched = [float(e) for e in schedule]
    if not sched:
        raise UsageError("empty discount schedule")
    if sched[-1] <= 0 or any(b >= a for a, b in zip(sched, sched[1:])):
        raise UsageError(f"discounts must be positive and strictly decreasing, got {sched}")
    return sched


def _record(sol, prev):
    u0 = mean_zero(sol.u)
    eiu = sol.epsilon * integrate(sol.u)
    d = sol.diagnostics
    return SweepRecord(
        epsilon=sol.epsilon,
        lambda_estimate=-eiu,
        eps_integral_u=eiu,
        gap=sol.gap,
        relative_gap=sol.relative_gap,
        u_change_sup=math.nan if prev is None else sup_norm(u0 - mean_zero(prev.u)),
        m_change_l1=math.nan if prev is None else l1_norm(sol.m - prev.m),
        h1_norm_m=sobolev_h1_norm(sol.m),
        iterations=d.iterations,
        wall_time=d.wall_time,
    )


def _assemble(records_solutions, keep):
    records = [r for r, _ in records_solutions]
    last = records_solutions[-1][1]
    return ErgodicSolution(
        u=mean_zero(last.u),
        m=last.m,
        lam=records[-1].lambda_estimate,
        sweep=records,
        solutions=[s for _, s in records_solutions] if keep else [last],
    )


def vanishing_discount_sweep(spec, grid, schedule, params: SolverParams = SolverParams(),
                             warm_start: bool = True, keep_solutions: bool = False,
                             workers: int = 1) -> ErgodicSolution:
    """Solve the discounted problem along ``schedule`` and extract (u, m, lambda).

    Warm starts feed each solve the previous (u, m) and penalties.  With
    ``warm_start=False`` the solves are independent and may run on
    ``workers`` threads.  A failing solve raises ``SweepError`` whose
    ``partial`` holds the completed part of the sweep.
    """
    sched = _check_schedule(schedule)
    if not spec.stability_condition():
        warnings.warn("growth exponents violate q >= d or r' <= q d / (d - q); "
                      "the vanishing-discount limit is not guaranteed", stacklevel=2)
    done = []

    def fail(eps, exc):
        partial = _assemble(done, True) if done else None
        raise SweepError(f"solve at eps={eps:g} failed: {exc}", partial=partial, cause=exc) from exc

    if warm_start or workers <= 1:
        state = None
        for eps in sched:
            try:
                sol = solve_dual(spec, grid, eps, params, initial=state if warm_start else None)
            except MFGError as exc:
                fail(eps, exc)
            done.append((_record(sol, done[-1][1] if done else None), sol))
            state = sol.state
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(solve_dual, spec, grid, eps, params) for eps in sched]
            for eps, fut in zip(sched, futures):
                try:
                    sol = fut.result()
                except MFGError as exc:
                    fail(eps, exc)
                done.append((_record(sol, done[-1][1] if done else None), sol))
    return _assemble(done, keep_solutions)


def selection_functional(u: Field, m: Field, mass_tol: float = 1e-6) -> float:
    """``int <u> m dx``; m must carry unit mass."""
    if abs(integrate(m) - 1.0) > mass_tol:
        raise UsageError(f"density mass {integrate(m):.12g} differs from 1")
    return integrate(mean_zero(u) * m)


def _mass(spec, grid, hvals, lam):
    x = grid.cell_centers()
    x = x[..., 0] if grid.d == 1 else x
    return integrate(Field(CELL, coupling_inverse(spec, x, hvals - lam), grid))


def _solve_mass_one(spec, grid, hvals, span=1e12):
    """lambda with  int (F*)'(H - lambda) = 1  by bracketing + Brent."""
    f = lambda lam: _mass(spec, grid, hvals, lam) - 1.0
    lo, hi = float(np.min(hvals)) - 1.0, float(np.max(hvals)) + 1.0
    trace = []
    for _ in range(200):
        flo, fhi = f(lo), f(hi)
        trace.append((lo, flo, hi, fhi))
        if flo > 0 > fhi:
            break
        if flo <= 0:
            lo -= 2.0 * (hi - lo)
        if fhi >= 0:
            hi += 2.0 * (hi - lo)
        if max(abs(lo), abs(hi)) > span:
            raise NumericError("no bracket for the ergodic constant", trace=trace)
    else:
        raise NumericError("no bracket for the ergodic constant", trace=trace)
    lam = optimize.brentq(f, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=500)
    return lam


def constant_solution_density(spec, grid):
    """(m, lambda) for the constant-potential ergodic solution:
    ``m = max(f^{-1}(x, H(x, 0) - lambda), 0)`` with lambda fixed by unit mass."""
    h0 = cell_hamiltonian(spec, grid, np.zeros(grid.shape))
    lam = _solve_mass_one(spec, grid, h0)
    x = grid.cell_centers()
    x = x[..., 0] if grid.d == 1 else x
    return Field(CELL, coupling_inverse(spec, x, h0 - lam), grid), float(lam)


def optimal_lambda(spec, grid, phi):
    """Minimise ``lambda -> A(phi, lambda)`` for fixed phi; returns (lambda, value).

    The objective is convex in lambda with derivative ``1 - int (F*)'(H(phi) - lambda)``.
    """
    hvals = cell_hamiltonian(spec, grid, phi)
    lam = _solve_mass_one(spec, grid, hvals)
    return float(lam), evaluate_A_ergodic(spec, grid, phi, lam)
