"""Primal solver: direct minimisation of the discrete A^eps over cell potentials.

A^eps is convex and C^1 (F* is C^1 for the power couplings), so a
quasi-Newton method with line search is a descent method on it.  The
gradient per unit cell volume is ``eps m - eps + div w`` for the implied
``m = (F*)'(eps u + H_i(u))`` and flux ``w``; its sup norm is reported as
the gradient norm.  The primal side certifies the dual solver: any iterate
gives an upper bound on min A^eps = -min B.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize

from .dual import SolverParams, _prepare
from .errors import ConvergenceError
from .functionals import A_and_gradient
from .grid import CELL, Field, laplacian_symbol


@dataclass
class PrimalIterate:
    """Best potential found by ``solve_primal``."""

    phi: Field
    objective_A: float
    gradient_norm: float
    iterations: int = 0
    converged: bool = False
    history: list = field(default_factory=list)
    wall_time: float = 0.0
    epsilon: Optional[float] = None

    def summary(self) -> dict:
        return {
            "side": "primal",
            "epsilon": self.epsilon,
            "n": self.phi.grid.n,
            "d": self.phi.grid.d,
            "objective_A": self.objective_A,
            "gradient_norm": self.gradient_norm,
            "iterations": self.iterations,
            "converged": self.converged,
            "wall_time": self.wall_time,
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True)


def solve_primal(spec, grid, eps, params: SolverParams = SolverParams(), initial=None) -> PrimalIterate:
    """Minimise A^eps with L-BFGS until ``|grad| <= params.primal_tol_grad``.

    ``initial`` is an optional starting potential (array or Field); the
    default is ``u = 0``.  Raises ``ConvergenceError`` carrying the best
    iterate when ``primal_max_iterations`` is exhausted.
    """
    _prepare(spec, grid, eps)
    t0 = time.perf_counter()
    vol = grid.cell_volume
    # fixed spectral preconditioner: optimise over y with u = (eps^2 + L)^(-1/2) y
    axes = tuple(range(grid.d))
    symbol = 1.0 / np.sqrt(eps**2 + laplacian_symbol(grid))

    def to_u(flat):
        return np.fft.irfftn(np.fft.rfftn(flat.reshape(grid.shape)) * symbol, s=grid.shape, axes=axes)

    def from_u(u):
        return (np.fft.irfftn(np.fft.rfftn(u) / symbol, s=grid.shape, axes=axes)).ravel()

    def fun(flat):
        val, grad, _, _ = A_and_gradient(spec, grid, to_u(flat), eps)
        return val, vol * to_u(grad).ravel()

    def true_gradient_norm(flat):
        return float(np.max(np.abs(A_and_gradient(spec, grid, to_u(flat), eps)[1])))

    if initial is None:
        x = np.zeros(grid.size)
    else:
        x = from_u(np.array(getattr(initial, "values", initial), dtype=float).reshape(grid.shape))

    history = []
    used = 0
    val, _ = fun(x)
    history.append(val)
    gnorm = true_gradient_norm(x)
    while gnorm > params.primal_tol_grad and used < params.primal_max_iterations:
        budget = params.primal_max_iterations - used
        res = optimize.minimize(
            fun,
            x,
            jac=True,
            method="L-BFGS-B",
            callback=lambda xk: history.append(fun(xk)[0]),
            options={
                "maxiter": budget,
                "maxfun": 2 * budget,
                "maxcor": 20,
                "gtol": 1e-3 * params.primal_tol_grad * vol,
                "ftol": 1e-16,
            },
        )
        used += max(int(res.nit), 1)
        if not res.fun < val:
            break  # the line search can make no further progress
        x, val = res.x, float(res.fun)
        gnorm = true_gradient_norm(x)
    result = PrimalIterate(
        phi=Field(CELL, to_u(x), grid),
        objective_A=float(val),
        gradient_norm=gnorm,
        iterations=used,
        converged=gnorm <= params.primal_tol_grad,
        history=history,
        wall_time=time.perf_counter() - t0,
        epsilon=float(eps),
    )
    if not result.converged:
        raise ConvergenceError(
            f"primal solver stopped at gradient norm {gnorm:.2e} after {used} iterations",
            diagnostics={"history": history},
            result=result,
        )
    return result
