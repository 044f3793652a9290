"""Acceptance suite: eight criteria, each a list of named threshold checks.

``run_suite`` shares one ``AcceptanceContext`` across criteria so that
sweeps at n = 128, 256, 512 are computed once.  ``tol_scale`` multiplies
every tolerance-type threshold (upper bounds grow, lower bounds shrink);
structural checks such as monotonicity are unaffected.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .conjugates import (
    coupling_conjugate,
    coupling_primitive,
    hamiltonian_conjugate,
    perspective_prox,
    perspective_value,
)
from .dual import SolverParams, solve_dual
from .ergodic import constant_solution_density, geometric_schedule, vanishing_discount_sweep
from .errors import UsageError
from .example import (
    example_density,
    example_fields,
    example_selected_limit,
    example_selection_derivative,
    example_selection_value,
    example_selection_value_half,
    example_spec,
    selection_study,
    theta_grid,
)
from .functionals import evaluate_A, evaluate_B
from .grid import (
    CELL,
    FACE,
    Field,
    TorusGrid,
    discrete_divergence,
    discrete_gradient,
    inner,
    l1_distance_to_function,
    l1_norm,
    l2_norm,
    mean_zero,
    sup_norm,
)
from .primal import solve_primal
from .problem import Potential, flat_spec, power_spec
from .verification import h1_monitor, supersolution_proxy, weak_solution_residuals

SCHEDULE = tuple(geometric_schedule(0.1, 0.5, 8))
REFINEMENT = (128, 256, 512)


@dataclass
class Check:
    name: str
    value: float
    threshold: float
    relation: str = "<="  # "<=", ">=", or "true"

    @property
    def passed(self) -> bool:
        if self.relation == "<=":
            return bool(self.value <= self.threshold)
        if self.relation == ">=":
            return bool(self.value >= self.threshold)
        return bool(self.value)

    def describe(self) -> str:
        if self.relation == "true":
            return f"{self.name}={'yes' if self.value else 'no'}"
        return f"{self.name}={self.value:.3g} {self.relation} {self.threshold:.3g}"


@dataclass
class CriterionResult:
    number: int
    title: str
    checks: list = field(default_factory=list)
    info: dict = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def line(self) -> str:
        body = "; ".join(c.describe() for c in self.checks)
        return f"criterion {self.number} [{'PASS' if self.passed else 'FAIL'}] {self.title}: {body}"

    def to_dict(self) -> dict:
        return {
            "number": self.number,
            "title": self.title,
            "passed": self.passed,
            "checks": [dict(name=c.name, value=c.value, threshold=c.threshold, relation=c.relation,
                            passed=c.passed) for c in self.checks],
            "info": self.info,
            "wall_time": self.wall_time,
        }


class AcceptanceContext:
    """Lazily computed, shared solver runs for the criteria."""

    def __init__(self, tol_scale: float = 1.0, params: SolverParams = SolverParams(), n: int = 512):
        if not tol_scale > 0:
            raise UsageError(f"tol_scale must be positive, got {tol_scale}")
        self.tol_scale = float(tol_scale)
        self.params = params
        self.n = int(n)
        self.spec = example_spec()
        self._sweeps = {}

    def upper(self, value):
        return value * self.tol_scale

    def lower(self, value):
        return value / self.tol_scale

    def grid(self, n=None):
        return TorusGrid(self.n if n is None else n)

    def sweep(self, n=None):
        n = self.n if n is None else n
        if n not in self._sweeps:
            self._sweeps[n] = vanishing_discount_sweep(self.spec, self.grid(n), SCHEDULE, self.params,
                                                       keep_solutions=True)
        return self._sweeps[n]

    @cached_property
    def dual_first(self):
        t0 = time.perf_counter()
        sol = solve_dual(self.spec, self.grid(), SCHEDULE[0], self.params)
        return sol, time.perf_counter() - t0


def _timed(fn):
    def run(ctx):
        t0 = time.perf_counter()
        res = fn(ctx)
        res.wall_time = time.perf_counter() - t0
        return res

    run.__name__ = fn.__name__
    run.__doc__ = fn.__doc__
    return run


@_timed
def criterion_1(ctx):
    """Duality gap between the primal minimiser and the dual optimum."""
    eps, grid = SCHEDULE[0], ctx.grid()
    dual, t_dual = ctx.dual_first
    t0 = time.perf_counter()
    primal = solve_primal(ctx.spec, grid, eps, ctx.params)
    t_primal = time.perf_counter() - t0
    A = evaluate_A(ctx.spec, grid, primal.phi, eps)
    B = evaluate_B(ctx.spec, grid, dual.m, dual.w)
    gap = abs(A + B) / (1.0 + abs(B))
    descent = bool(np.all(np.diff(primal.history) <= 1e-12 * (1 + abs(B)))) if len(primal.history) > 1 else True
    weak = bool(min(primal.history + [A]) >= -B - 1e-12 * (1 + abs(B)))
    return CriterionResult(1, "duality gap closure", [
        Check("|A(phi*)+B(m*,w*)|/(1+|B*|)", gap, ctx.upper(1e-4)),
        Check("dual solve seconds", t_dual, 60.0),
        Check("primal solve seconds", t_primal, 60.0),
        Check("weak duality along primal iterates", weak, 1, "true"),
        Check("primal descent", descent, 1, "true"),
    ], info={"A": A, "B": B, "dual_relative_gap": dual.relative_gap, "primal_iterations": primal.iterations})


@_timed
def criterion_2(ctx):
    """Two random initialisations reach the same discounted solution."""
    eps, grid = SCHEDULE[0], ctx.grid()
    s1 = solve_dual(ctx.spec, grid, eps, replace(ctx.params, seed=1))
    s2 = solve_dual(ctx.spec, grid, eps, replace(ctx.params, seed=2))
    return CriterionResult(2, "uniqueness across seeds", [
        Check("|m1-m2|_L1", l1_norm(s1.m - s2.m), ctx.upper(1e-3)),
        Check("|u1-u2|_inf", sup_norm(s1.u - s2.u), ctx.upper(1e-2)),
    ])


@_timed
def criterion_3(ctx):
    """Ergodic constant from the vanishing-discount sweep."""
    sweep = ctx.sweep()
    mags = [abs(r.eps_integral_u) for r in sweep.sweep[-4:]]
    decreasing = all(b < a for a, b in zip(mags, mags[1:]))
    return CriterionResult(3, "ergodic constant", [
        Check("|lambda_est| at final eps", abs(sweep.lam), ctx.upper(2e-2)),
        Check("|eps int u| decreasing over last four", decreasing, 1, "true"),
    ], info={"eps_integral_u": [r.eps_integral_u for r in sweep.sweep]})


@_timed
def criterion_4(ctx):
    """Density recovery and its refinement trend (continuum L1 distance)."""
    errors, sampled = [], []
    for n in REFINEMENT:
        m = ctx.sweep(n).m
        errors.append(l1_distance_to_function(m, example_density))
        sampled.append(l1_norm(m - m.grid.sample(example_density)))
    final = errors[REFINEMENT.index(ctx.n)] if ctx.n in REFINEMENT else l1_distance_to_function(
        ctx.sweep().m, example_density)
    decreasing = all(b < a for a, b in zip(errors, errors[1:]))
    return CriterionResult(4, "density recovery", [
        Check(f"|m_eps-m|_L1 at n={ctx.n}", final, ctx.upper(5e-2)),
        Check("error decreasing over n=128,256,512", decreasing, 1, "true"),
    ], info={"l1_continuum": dict(zip(REFINEMENT, errors)), "l1_sampled": dict(zip(REFINEMENT, sampled))})


def _central_difference(fn, theta, delta=1e-5):
    return (fn(theta + delta) - fn(theta - delta)) / (2 * delta)


@_timed
def criterion_5(ctx):
    """Selection of the limit by the solver and by the oracle study."""
    sweep = ctx.sweep()
    err = sup_norm(mean_zero(sweep.u) - example_selected_limit(sweep.u.grid))
    study = selection_study(65)
    interior = theta_grid(33)[1:-1]
    half = max(abs(_central_difference(example_selection_value_half, t) - example_selection_derivative(t))
               for t in interior)
    full = max(abs(_central_difference(example_selection_value, t) - 2 * example_selection_derivative(t))
               for t in interior)
    return CriterionResult(5, "selection of the limit", [
        Check("|<u_eps>-u_1/4|_inf", err, ctx.upper(5e-2)),
        Check("|argmin theta - 1/4| on 65 points", abs(study["argmin"] - 0.25), study["step"]),
        Check("derivative formula vs central difference", half, ctx.upper(1e-6)),
        Check("full-period derivative vs twice the formula", full, ctx.upper(1e-6)),
    ])


@_timed
def criterion_6(ctx):
    """Closed-form weak solutions pass; reflected ones trip the supersolution proxy."""
    grid = ctx.grid()
    eq = sub = fp = 0.0
    for theta in theta_grid(9):
        u, m, w, du = example_fields(grid, theta)
        rep = weak_solution_residuals(ctx.spec, grid, u, m, w, mode="ergodic", lam=0.0, du=du)
        eq, sub, fp = max(eq, rep.eq_residual_on_support), max(sub, rep.subsol_violation), max(fp, rep.fp_residual)
    # the limit of the interior minimum is -W(5/32) = 1
    # at theta = 1/8 and 3/8 the reflection is itself a family member (v^(1/8) = u^(3/8) + C)
    bounded, endpoint = [], []
    for n in REFINEMENT:
        g = TorusGrid(n)
        target = ctx.spec.g(g.cell_centers()[..., 0])
        viol = [supersolution_proxy(ctx.spec, g, example_fields(g, t, reflected=True)[0], target)
                for t in theta_grid(9)]
        bounded.append(min(viol[1:-1]))
        endpoint.append(max(viol[0], viol[-1]))
    return CriterionResult(6, "analytic weak-solution certificate", [
        Check("eq residual (9 thetas)", eq, ctx.upper(1e-10)),
        Check("subsolution violation (9 thetas)", sub, ctx.upper(1e-10)),
        Check("fp residual / h", fp / grid.h, ctx.upper(1.0)),
        Check("min reflected proxy violation, interior thetas", min(bounded), ctx.lower(0.5), ">="),
    ], info={"reflected_violation": dict(zip(REFINEMENT, bounded)),
             "reflected_endpoint_violation": dict(zip(REFINEMENT, endpoint))})


@_timed
def criterion_7(ctx):
    """Flat instance: exact constant solution at every discount."""
    spec, grid = flat_spec(), TorusGrid(64)
    sweep = vanishing_discount_sweep(spec, grid, SCHEDULE, ctx.params, keep_solutions=True)
    u_err = max(sup_norm(s.u - 1.0 / s.epsilon) for s in sweep.solutions)
    m_err = max(sup_norm(s.m - 1.0) for s in sweep.solutions)
    lam_err = max(abs(r.lambda_estimate + 1.0) for r in sweep.sweep)
    m0, lam0 = constant_solution_density(spec, grid)
    return CriterionResult(7, "constant-solution instance", [
        Check("|u_eps - 1/eps|_inf", u_err, ctx.upper(1e-8)),
        Check("|m_eps - 1|_inf", m_err, ctx.upper(1e-8)),
        Check("|lambda_est + 1|", lam_err, ctx.upper(1e-8)),
        Check("closed-form density |lambda + 1| + |m - 1|", abs(lam0 + 1) + sup_norm(m0 - 1.0), ctx.upper(1e-8)),
    ])


def _adjointness(rng):
    worst = 0.0
    for d, n in ((1, 4), (1, 7), (1, 64), (2, 4), (2, 9), (2, 32)):
        g = TorusGrid(n, d)
        phi = Field(CELL, rng.standard_normal(g.shape), g)
        w = Field(FACE, rng.standard_normal(g.face_shape), g)
        lhs = inner(discrete_gradient(phi), w)
        rhs = -inner(phi, discrete_divergence(w))
        worst = max(worst, abs(lhs - rhs) / (l2_norm(discrete_gradient(phi)) * l2_norm(w)))
    return worst


def _fenchel_young(rng, samples=1000):
    worst = 0.0
    for r, q in ((2.0, 2.0), (1.5, 3.0), (3.0, 1.5)):
        spec = power_spec(kappa=0.7, r=r, V=Potential("cosine", 0.5), c_f=1.3, q=q, g=Potential("cosine", 0.2, 2))
        x = rng.random(samples)
        m = rng.uniform(0.0, 5.0, samples)
        a = spec.f(x, m)
        fy = coupling_primitive(spec, x, m) + coupling_conjugate(spec, x, a) - a * m
        worst = max(worst, float(np.max(np.abs(fy) / (1 + np.abs(a * m)))))
        p = rng.uniform(-4.0, 4.0, samples)
        v = spec.hamiltonian.kappa * r * np.abs(p) ** (r - 1) * np.sign(p)
        hy = spec.H(x, p) + hamiltonian_conjugate(spec, x, v) - p * v
        worst = max(worst, float(np.max(np.abs(hy) / (1 + np.abs(p * v)))))
    return worst


def _prox_local_search(rng, cases=6, width=101):
    """Largest objective decrease found by a local grid around the prox output (<= 0 is optimal)."""
    worst = -math.inf
    for k in range(cases):
        r = (1.5, 2.0, 3.0)[k % 3]
        spec = power_spec(kappa=0.5, r=r, V=Potential("cosine", 0.5))
        x, s = float(rng.random()), float(rng.uniform(0.1, 2.0))
        mt, wt = float(rng.uniform(-0.5, 2.0)), float(rng.uniform(-2.0, 2.0))
        m, w = perspective_prox(spec, x, s, mt, wt)

        def obj(mm, ww):
            with np.errstate(invalid="ignore"):
                return perspective_value(spec, x, mm, ww) + ((mm - mt) ** 2 + (ww - wt) ** 2) / (2 * s)

        rad = 0.05 * (1 + abs(m) + abs(w))
        mm, ww = np.meshgrid(np.linspace(max(m - rad, 0.0), m + rad, width), np.linspace(w - rad, w + rad, width))
        best = float(np.nanmin(obj(mm, ww)))
        worst = max(worst, float(obj(np.array(m), np.array(w))) - best)
    return worst


@_timed
def criterion_8(ctx):
    """Structural properties on seeded random samples."""
    rng = np.random.default_rng(20240601)
    monitor = h1_monitor([s.m for s in ctx.sweep().solutions])
    return CriterionResult(8, "structural properties", [
        Check("adjointness defect", _adjointness(rng), ctx.upper(1e-13)),
        Check("Fenchel-Young defect", _fenchel_young(rng), ctx.upper(1e-10)),
        Check("prox excess over local grid", _prox_local_search(rng), ctx.upper(1e-12)),
        Check("H1 monitor ratio", monitor["ratio"], ctx.upper(2.0)),
    ], info={"h1_norms": monitor["norms"]})


CRITERIA = {1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4,
            5: criterion_5, 6: criterion_6, 7: criterion_7, 8: criterion_8}
SUITES = {
    "acceptance": (1, 2, 3, 4, 5, 6, 7, 8),
    "solver": (1, 2, 3, 4, 7),
    "analytic": (6, 8),
}


def run_suite(suite: str = "acceptance", tol_scale: float = 1.0, params: SolverParams = SolverParams(),
              context: AcceptanceContext = None, report=None) -> list:
    """Run the named suite; ``report`` (e.g. ``print``) receives each pass/fail line."""
    if suite not in SUITES:
        raise UsageError(f"unknown suite {suite!r}; choose from {sorted(SUITES)}")
    ctx = context or AcceptanceContext(tol_scale, params)
    results = []
    for number in SUITES[suite]:
        res = CRITERIA[number](ctx)
        results.append(res)
        if report is not None:
            report(res.line())
    return results


def matrix(results) -> str:
    """Plain-text pass/fail matrix."""
    width = max(len(r.title) for r in results)
    lines = [f"{'#':>2}  {'criterion':<{width}}  result  seconds"]
    for r in results:
        lines.append(f"{r.number:>2}  {r.title:<{width}}  {'PASS' if r.passed else 'FAIL':<6}  {r.wall_time:7.2f}")
    return "\n".join(lines)
