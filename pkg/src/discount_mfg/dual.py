"""Dual solver: minimise B over the discrete K_eps and recover u as its multiplier.

The splitting is ADMM on the equivalent saddle problem

    min_u  G(Lambda u),   Lambda u = (u, D- u, D+ u)  per cell,

where ``G(a, p-, p+) = sum h^d [F*(eps a + V + (K(p-) + K(p+)) / 2) - eps a]``.
The multiplier ``sigma`` of ``Lambda u = q`` carries the dual pair: at a
fixed point ``m = (F*)'(...)`` and ``w = -(m_i K'(p+_i) + m_{i+1} K'(p-_{i+1})) / 2``,
and ``Lambda^T sigma = 0`` is exactly ``eps m + div w = eps``.  Each iteration
is one FFT Poisson solve for u plus a per-cell proximal step whose only
unknown is the scalar multiplier m of that cell.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from .conjugates import monotone_root
from .errors import ConfigError, ConvergenceError, DomainError, UsageError
from .functionals import (
    constraint_residual,
    evaluate_A,
    evaluate_B,
    flux_from,
    kinetic_derivative,
    project_feasible,
    separable_kinetic,
)
from .grid import CELL, FACE, Field, laplacian_symbol, one_sided_differences

MIN_CELLS = 4


@dataclass(frozen=True)
class SolverParams:
    """Iteration controls shared by the dual and primal solvers.

    ``step`` is the initial ADMM penalty on the gradient splitting (``None``
    picks ``0.05 sqrt(eps)``), ``step_ratio`` the penalty ratio for the
    ``a = u`` splitting.  With ``adaptive`` set, both penalties are rescaled
    by ``balance_factor`` whenever one residual exceeds the other by
    ``balance_threshold`` (checked every ``check_every`` iterations).

    Tolerances: ``tol_primal`` is relative to ``1 + |Lambda u|``,
    ``tol_dual`` bounds the constraint residual ``|eps m + div w - eps|``
    absolutely, ``tol_gap`` is relative to ``1 + |B|``.
    """

    step: Optional[float] = None
    step_a: Optional[float] = None
    step_ratio: float = 1.0
    adaptive: bool = True
    balance_threshold: float = 5.0
    balance_factor: float = 2.0
    check_every: int = 50
    max_iterations: int = 50_000
    tol_primal: float = 1e-8
    tol_dual: float = 1e-8
    tol_gap: float = 1e-6
    primal_tol_grad: float = 1e-4
    primal_max_iterations: int = 200_000
    seed: Optional[int] = None
    perturbation: float = 0.5

    def __post_init__(self):
        pos = ["step_ratio", "balance_threshold", "tol_primal", "tol_dual", "tol_gap",
               "primal_tol_grad", "perturbation"]
        for name in pos:
            if not getattr(self, name) > 0:
                raise ConfigError(f"must be positive, got {getattr(self, name)}", f"solver.{name}")
        if self.step is not None and not self.step > 0:
            raise ConfigError(f"must be positive, got {self.step}", "solver.step")
        if not self.balance_factor > 1:
            raise ConfigError("must exceed 1", "solver.balance_factor")
        for name in ("check_every", "max_iterations", "primal_max_iterations"):
            if int(getattr(self, name)) < 1:
                raise ConfigError("must be a positive integer", f"solver.{name}")

    def scaled(self, factor: float) -> "SolverParams":
        """Copy with every tolerance multiplied by ``factor``."""
        return replace(self, tol_primal=self.tol_primal * factor, tol_dual=self.tol_dual * factor,
                       tol_gap=self.tol_gap * factor, primal_tol_grad=self.primal_tol_grad * factor)

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    @classmethod
    def from_dict(cls, data: dict, location: str = "solver") -> "SolverParams":
        if not isinstance(data, dict):
            raise ConfigError("expected a table", location)
        allowed = set(cls.__dataclass_fields__)
        unknown = set(data) - allowed
        if unknown:
            raise ConfigError(f"unknown keys {sorted(unknown)}", location)
        return cls(**data)


@dataclass
class SolverDiagnostics:
    """Residual histories sampled every ``check_every`` iterations."""

    iterations: int = 0
    checkpoints: list = field(default_factory=list)
    primal_residual: list = field(default_factory=list)
    dual_residual: list = field(default_factory=list)
    gap: list = field(default_factory=list)
    objective_B: list = field(default_factory=list)
    step: list = field(default_factory=list)
    wall_time: float = 0.0
    converged: bool = False
    projection: str = ""

    def summary(self) -> dict:
        last = lambda xs: (xs[-1] if xs else None)
        return {
            "iterations": self.iterations,
            "converged": self.converged,
            "primal_residual": last(self.primal_residual),
            "dual_residual": last(self.dual_residual),
            "gap": last(self.gap),
            "wall_time": self.wall_time,
            "projection": self.projection,
        }


@dataclass
class DiscountSolution:
    """Discrete weak solution of the discounted system at one epsilon."""

    epsilon: float
    u: Field
    m: Field
    w: Field
    objective_B: float
    objective_A: float
    diagnostics: SolverDiagnostics
    state: Optional[dict] = field(default=None, repr=False)

    @property
    def gap(self) -> float:
        return self.objective_A + self.objective_B

    @property
    def relative_gap(self) -> float:
        return abs(self.gap) / (1.0 + abs(self.objective_B))

    def summary(self) -> dict:
        from .grid import integrate

        out = {
            "side": "dual",
            "epsilon": self.epsilon,
            "n": self.u.grid.n,
            "d": self.u.grid.d,
            "objective_B": self.objective_B,
            "objective_A": self.objective_A,
            "gap": self.gap,
            "relative_gap": self.relative_gap,
            "mass": integrate(self.m),
            "eps_integral_u": self.epsilon * integrate(self.u),
            "constraint_residual": constraint_residual(self.u.grid, self.epsilon, self.m, self.w),
        }
        out.update({f"diag_{k}": v for k, v in self.diagnostics.summary().items()})
        return out

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True)


def _prepare(spec, grid, eps):
    if not eps > 0:
        raise DomainError(f"epsilon must be positive, got {eps}")
    if grid.n < MIN_CELLS:
        raise UsageError(f"grid needs at least {MIN_CELLS} cells per axis, got n={grid.n}")
    if grid.d != spec.dimension:
        raise UsageError(f"grid dimension {grid.d} differs from problem dimension {spec.dimension}")
    spec.require_power("the discrete solver")
    if not separable_kinetic(spec):
        raise UsageError("2-D solves support r = 2 only (axis-separable kinetic stencil)")


class _CellProx:
    """Per-cell proximal step of G, parametrised by the cell multiplier mu."""

    def __init__(self, spec, grid, eps):
        x = grid.cell_centers()
        x = x[..., 0] if grid.d == 1 else x
        self.V = spec.V(x)
        self.g = spec.g(x)
        self.c = spec.coupling.coefficient
        self.q = spec.q
        self.kappa = spec.hamiltonian.kappa
        self.r = spec.r
        self.eps = eps

    def shrink(self, z, mu, tp):
        """``prox`` of ``(mu / (2 tp)) K`` at z, componentwise; returns (p, dp/dmu)."""
        kappa, r = self.kappa, self.r
        if r == 2.0:
            den = 1.0 + mu * kappa / tp
            p = z / den
            return p, -p * (kappa / tp) / den
        beta = mu * kappa * r / (2.0 * tp)
        za = np.abs(z)

        def fun(t):
            return t + beta * np.power(t, r - 1.0) - za, 1.0 + beta * (r - 1.0) * np.power(np.maximum(t, 1e-300), r - 2.0)

        t = monotone_root(fun, 0.0, za, x0=za, scale=za)
        kp = kappa * r * np.power(t, r - 1.0)
        k2 = kappa * r * (r - 1.0) * np.power(np.maximum(t, 1e-300), r - 2.0)
        dt = -kp / (2.0 * tp) / (1.0 + mu * k2 / (2.0 * tp))
        return np.sign(z) * t, np.sign(z) * dt

    def solve(self, za, zm, zp, ta, tp, mu0):
        eps, kappa, r = self.eps, self.kappa, self.r

        # s(0): resource level when the cell carries no mass; m = 0 iff s(0) <= g
        s0 = eps * (za + eps / ta) + self.V + 0.5 * kappa * np.sum(np.abs(zm) ** r + np.abs(zp) ** r, axis=0)
        live = s0 > self.g
        mu = np.zeros_like(za)
        if np.any(live):
            za_l, zm_l, zp_l = za[live], zm[:, live], zp[:, live]
            V_l, g_l = self.V[live], self.g[live]
            c, q = self.c, self.q

            def psi(m):
                pm, dpm = self.shrink(zm_l, m, tp)
                pp, dpp = self.shrink(zp_l, m, tp)
                kin = 0.5 * kappa * np.sum(np.abs(pm) ** r + np.abs(pp) ** r, axis=0)
                dkin = 0.5 * np.sum(_kprime(kappa, r, pm) * dpm
                                    + _kprime(kappa, r, pp) * dpp, axis=0)
                s = eps * (za_l + eps * (1.0 - m) / ta) + V_l + kin
                fm = c * np.power(m, q - 1.0) + g_l
                dfm = c * (q - 1.0) * np.power(np.maximum(m, 1e-300), q - 2.0)
                return fm - s, dfm + eps**2 / ta - dkin

            hi = np.power((s0[live] - g_l) / c, 1.0 / (q - 1.0))
            mu[live] = monotone_root(psi, 0.0, hi, x0=np.minimum(mu0[live], hi), scale=np.abs(s0[live]))
        pm, _ = self.shrink(zm, mu, tp)
        pp, _ = self.shrink(zp, mu, tp)
        a = za + eps * (1.0 - mu) / ta
        return mu, a, pm, pp


def _kprime(kappa, r, p):
    if r == 2.0:
        return 2.0 * kappa * p
    return kappa * r * np.sign(p) * np.power(np.abs(p), r - 1.0)


def _initial_state(spec, grid, eps, params, initial):
    """ADMM variables from an initial (u, m) guess."""
    h = grid.h
    if initial is not None:
        u = np.array(initial["u"], dtype=float)
        m = np.array(initial["m"], dtype=float)
        tp = initial.get("step")
        ta = initial.get("step_a")
        eps_old = initial.get("epsilon")
        if eps_old is not None:
            # u ~ -lam/eps + O(1): rescale the mean, and the penalties to their eps scaling
            ratio = float(eps_old) / eps
            u = u + (ratio - 1.0) * u.mean()
            tp = None if tp is None else tp / np.sqrt(ratio)
            ta = None if ta is None else ta / ratio**2
    else:
        u = np.zeros(grid.shape)
        m = np.ones(grid.shape)
        tp = ta = None
        if params.seed is not None:
            rng = np.random.default_rng(params.seed)
            amp = params.perturbation
            u = amp / eps * rng.standard_normal(grid.shape)
            m = 1.0 + amp * rng.uniform(-1.0, 1.0, grid.shape)
            m /= m.mean()
    if tp is None:
        tp = params.step if params.step is not None else 0.05 * np.sqrt(eps)
        ta = params.step_a if params.step_a is not None else params.step_ratio * eps**2
    bwd, fwd = one_sided_differences(u, h)
    kd = lambda p: kinetic_derivative(spec, p)
    return {
        "u": u,
        "mu": m,
        "qa": u.copy(),
        "qm": bwd,
        "qp": fwd,
        "sa": eps * (m - 1.0),
        "sm": 0.5 * m * kd(bwd),
        "sp": 0.5 * m * kd(fwd),
        "tp": float(tp),
        "ta": float(ta),
    }


def _adjoint(grid, ya, ym, yp):
    """``Lambda^T (ya, ym, yp)`` with ``D-^T`` and ``D+^T`` written out per axis."""
    h = grid.h
    out = ya.copy()
    for k in range(grid.d):
        out += (ym[k] - np.roll(ym[k], -1, axis=k)) / h
        out += (np.roll(yp[k], 1, axis=k) - yp[k]) / h
    return out


def _l2(grid, *arrays):
    return float(np.sqrt(grid.cell_volume * sum(np.sum(a**2) for a in arrays)))


def solve_dual(spec, grid, eps, params: SolverParams = SolverParams(), initial=None) -> DiscountSolution:
    """Minimise B over ``eps m + div w = eps`` and return (u, m, w).

    ``initial`` may be a previous solution's ``state`` (warm start) or a dict
    with ``u`` and ``m`` arrays.  Raises ``ConvergenceError`` (with the best
    iterate in ``.result``) when ``max_iterations`` is reached.
    """
    _prepare(spec, grid, eps)
    t0 = time.perf_counter()
    h = grid.h
    st = _initial_state(spec, grid, eps, params, initial)
    u, mu = st["u"], st["mu"]
    qa, qm, qp = st["qa"], st["qm"], st["qp"]
    sa, sm, sp = st["sa"], st["sm"], st["sp"]
    tp, ta = st["tp"], st["ta"]
    lap = laplacian_symbol(grid)
    prox = _CellProx(spec, grid, eps)
    diag = SolverDiagnostics()
    axes = tuple(range(grid.d))

    def finish(it, converged):
        w = flux_from(spec, grid, mu, qm, qp)
        m_proj, w_proj, how = project_feasible(grid, eps, mu, w)
        diag.iterations = it
        diag.converged = converged
        diag.projection = how
        diag.wall_time = time.perf_counter() - t0
        state = {"u": u.copy(), "m": mu.copy(), "step": tp, "step_a": ta, "epsilon": float(eps)}
        return DiscountSolution(
            epsilon=float(eps),
            u=Field(CELL, u, grid),
            m=Field(CELL, m_proj, grid),
            w=Field(FACE, w_proj, grid),
            objective_B=evaluate_B(spec, grid, m_proj, w_proj),
            objective_A=evaluate_A(spec, grid, u, eps),
            diagnostics=diag,
            state=state,
        )

    for it in range(1, params.max_iterations + 1):
        rhs = _adjoint(grid, ta * qa - sa, tp * qm - sm, tp * qp - sp)
        u = np.fft.irfftn(np.fft.rfftn(rhs) / (ta + 2.0 * tp * lap), s=grid.shape, axes=axes)
        bwd, fwd = one_sided_differences(u, h)
        za, zm, zp = u + sa / ta, bwd + sm / tp, fwd + sp / tp
        check = it % params.check_every == 0 or it == params.max_iterations
        if check:
            q_prev = (qa, qm, qp)
        mu, qa, qm, qp = prox.solve(za, zm, zp, ta, tp, mu)
        ra, rm, rp = u - qa, bwd - qm, fwd - qp
        sa = sa + ta * ra
        sm = sm + tp * rm
        sp = sp + tp * rp
        if not check:
            continue
        primal = _l2(grid, ra, rm, rp) / (1.0 + _l2(grid, u, bwd, fwd))
        w = flux_from(spec, grid, mu, qm, qp)
        dual = constraint_residual(grid, eps, mu, w)
        m_proj, w_proj, _ = project_feasible(grid, eps, mu, w)
        B = evaluate_B(spec, grid, m_proj, w_proj)
        A = evaluate_A(spec, grid, u, eps)
        gap = abs(A + B) / (1.0 + abs(B))
        diag.checkpoints.append(it)
        diag.primal_residual.append(primal)
        diag.dual_residual.append(dual)
        diag.gap.append(gap)
        diag.objective_B.append(B)
        diag.step.append(tp)
        if not np.all(np.isfinite(u)):
            break
        if primal <= params.tol_primal and dual <= params.tol_dual and gap <= params.tol_gap:
            return finish(it, True)
        if params.adaptive:
            # balance each splitting block on its own residual pair
            ra_n, rp_n = _l2(grid, ra), _l2(grid, rm, rp)
            sa_n = _l2(grid, ta * (qa - q_prev[0]))
            sp_n = _l2(grid, _adjoint(grid, 0 * qa, tp * (qm - q_prev[1]), tp * (qp - q_prev[2])))
            thr, fac = params.balance_threshold, params.balance_factor
            if ra_n > thr * sa_n:
                ta *= fac
            elif sa_n > thr * ra_n:
                ta /= fac
            if rp_n > thr * sp_n:
                tp *= fac
            elif sp_n > thr * rp_n:
                tp /= fac
    result = finish(diag.checkpoints[-1] if diag.checkpoints else params.max_iterations, False)
    raise ConvergenceError(
        f"dual solver stopped after {result.diagnostics.iterations} iterations "
        f"(primal {diag.primal_residual[-1]:.2e}, dual {diag.dual_residual[-1]:.2e}, gap {diag.gap[-1]:.2e})",
        diagnostics=diag,
        result=result,
    )
