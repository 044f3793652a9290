import dataclasses
import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from discount_mfg.dual import SolverParams, solve_dual
from discount_mfg.errors import ConfigError, ConvergenceError, DomainError, UsageError
from discount_mfg.functionals import constraint_residual
from discount_mfg.grid import TorusGrid, integrate, l1_norm, sup_norm
from discount_mfg.problem import flat_spec


@pytest.fixture(scope="module")
def example_solution(spec, grid128):
    return solve_dual(spec, grid128, 0.1)


def test_flat_instance_exact():
    g = TorusGrid(32)
    sol = solve_dual(flat_spec(), g, 0.2)
    assert sol.diagnostics.converged
    assert_allclose(sol.u.values, 5.0, atol=1e-8)
    assert_allclose(sol.m.values, 1.0, atol=1e-8)
    assert sup_norm(sol.w) <= 1e-8
    assert sol.objective_B == pytest.approx(0.5, abs=1e-10)


def test_example_converges_with_small_gap(example_solution, grid128):
    sol = example_solution
    assert sol.diagnostics.converged
    assert sol.relative_gap <= 1e-6
    assert sol.gap >= -1e-12  # weak duality
    assert constraint_residual(grid128, 0.1, sol.m, sol.w) <= 1e-8
    assert integrate(sol.m) == pytest.approx(1.0, abs=1e-12)
    assert np.all(sol.m.values >= 0)


def test_example_density_concentrates_where_potential_is_high(example_solution, grid128):
    x = grid128.cell_centers()[:, 0]
    m = example_solution.m.values
    assert m[np.argmin(np.abs(x - 0.0))] > m[np.argmin(np.abs(x - 0.25))]


def test_seed_independence(example_solution, spec, grid128):
    for seed in (1, 2):
        other = solve_dual(spec, grid128, 0.1, SolverParams(seed=seed))
        assert l1_norm(other.m - example_solution.m) <= 1e-5
        assert sup_norm(other.u - example_solution.u) <= 1e-4


def test_warm_start_reuses_state(example_solution, spec, grid128):
    cold = solve_dual(spec, grid128, 0.05)
    warm = solve_dual(spec, grid128, 0.05, initial=example_solution.state)
    assert warm.diagnostics.iterations <= cold.diagnostics.iterations
    assert l1_norm(warm.m - cold.m) <= 1e-5


def test_B_history_settles(example_solution):
    B = np.array(example_solution.diagnostics.objective_B)
    tail = B[len(B) * 2 // 3:]
    assert np.all(np.diff(tail) <= 1e-6 * (1 + np.abs(tail[:-1])))


def test_rejects_bad_inputs(spec):
    with pytest.raises(DomainError):
        solve_dual(spec, TorusGrid(16), 0.0)
    with pytest.raises(UsageError):
        solve_dual(spec, TorusGrid(3), 0.1)


def test_iteration_cap_raises_with_result(spec):
    with pytest.raises(ConvergenceError) as err:
        solve_dual(spec, TorusGrid(64), 0.1, SolverParams(max_iterations=20, check_every=10))
    res = err.value.result
    assert res is not None and not res.diagnostics.converged
    assert res.diagnostics.iterations == 20
    assert integrate(res.m) == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("kw", [dict(tol_gap=0.0), dict(step=-1.0), dict(balance_factor=1.0),
                                dict(max_iterations=0)])
def test_params_validation(kw):
    with pytest.raises(ConfigError):
        SolverParams(**kw)


def test_params_round_trip_and_scaling():
    p = SolverParams(seed=3, step_ratio=2.0)
    assert SolverParams.from_dict(p.to_dict()) == p
    s = p.scaled(10.0)
    assert s.tol_gap == pytest.approx(1e-5) and s.primal_tol_grad == pytest.approx(1e-3)
    assert dataclasses.replace(s, tol_gap=p.tol_gap).tol_gap == p.tol_gap
    with pytest.raises(ConfigError, match="unknown"):
        SolverParams.from_dict({"tol": 1.0})


def test_summary_is_json(example_solution):
    data = json.loads(example_solution.to_json())
    for key in ("epsilon", "objective_A", "objective_B", "gap", "mass", "eps_integral_u",
                "constraint_residual", "diag_iterations", "diag_converged"):
        assert key in data
    assert data["side"] == "dual"
