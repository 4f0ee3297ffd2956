import json

import numpy as np
import pytest

from mechsolve.model import InterferenceModel, ProblemInstance
from mechsolve.oracle import (
    CONSTRAINTS,
    GridSpec,
    check_constraints,
    first_best_policy,
    grid_solve,
    objective_bound,
    pair_tables,
)
from mechsolve.solver import allocation

from conftest import UNIT, gaussian_instance, solved

SMALL = GridSpec(120, 120)


class TestGridSpec:
    def test_bounds(self):
        with pytest.raises(ValueError):
            GridSpec(1, 10)
        with pytest.raises(ValueError):
            GridSpec(10, 4096)
        assert GridSpec() == GridSpec(400, 400)


class TestGridSolve:
    @pytest.mark.parametrize("model", ["independent", "power"])
    def test_empty_mechanism_is_a_floor(self, model):
        res = grid_solve(gaussian_instance(model), SMALL)
        assert res.best_objective >= 0.0
        assert res.feasible_count >= 1
        assert res.best_residual >= -1e-9

    def test_uniform_instance_floor(self):
        res = grid_solve(ProblemInstance(InterferenceModel.INDEPENDENT, 0.5, 1.0, UNIT, UNIT), SMALL)
        assert res.best_objective >= 0.0

    @pytest.mark.parametrize("model", ["independent", "power"])
    def test_agrees_with_solver(self, model):
        sol = solved(model)
        res = grid_solve(sol.instance, GridSpec(400, 400))
        assert abs(res.best_objective - sol.objective) <= 2e-3
        assert abs(res.best_u_bot - sol.u_bot) <= res.u_step
        assert abs(res.best_u_top - sol.u_top) <= res.u_step
        if model == "power":
            assert res.best_alpha_opt >= 1.0

    @pytest.mark.parametrize("model", ["independent", "power"])
    def test_band_collapses_for_huge_K(self, model):
        res = grid_solve(gaussian_instance(model, 6.0, 1e6), GridSpec(200, 200))
        assert res.best_u_top - res.best_u_bot <= 2 * res.u_step

    def test_deterministic(self):
        inst = gaussian_instance("power", 6.0, 25.0)
        assert grid_solve(inst, SMALL) == grid_solve(inst, SMALL)

    @pytest.mark.parametrize("model", ["independent", "power"])
    def test_refinement_does_not_lose_value(self, model):
        inst = gaussian_instance(model)
        coarse, fine = GridSpec(100, 100), GridSpec(200, 200)
        drop = grid_solve(inst, coarse).best_objective - grid_solve(inst, fine).best_objective
        assert drop <= objective_bound(inst, coarse)

    def test_feasible_u_top_is_a_prefix(self):
        ucand, objective, residual = pair_tables(gaussian_instance("independent"), GridSpec(200, 200))
        for i in range(ucand.size):
            ok = residual[i, i:] >= -1e-9
            if ok.any():
                last = int(np.flatnonzero(ok)[-1])
                assert ok[: last + 1].all()


class TestCheckConstraints:
    @pytest.mark.parametrize("model", ["independent", "power"])
    def test_solved_policy_is_clean(self, model):
        sol = solved(model)
        report = check_constraints(sol.instance, sol)
        assert set(report.violations) == set(CONSTRAINTS)
        assert report.ok(1e-6), report.to_dict()
        assert report.band_nonempty

    def test_first_best_is_not_incentive_compatible(self):
        inst = gaussian_instance("independent")
        report = check_constraints(inst, first_best_policy(inst))
        assert report.violations["ic_incumbent"].max_violation == 1.0
        assert report.budget_residual > 0
        assert not report.ok()

    def test_no_audit_inside_band(self):
        sol = solved("independent")

        def lax(alpha, u):
            a, _ = allocation(sol, alpha, u)
            return a, 0

        report = check_constraints(sol.instance, (lax, [sol.u_bot, sol.u_top]))
        worst = report.violations["ic_incumbent"]
        assert worst.max_violation == 1.0
        assert sol.u_bot < worst.u <= sol.u_top

    def test_audit_without_exclusivity_flagged(self):
        inst = gaussian_instance("independent")
        report = check_constraints(inst, lambda a, u: (0, 1), GridSpec(20, 20))
        assert report.violations["inspect_requires_exclusive"].max_violation == 1.0

    def test_non_monotone_policy_flagged(self):
        inst = gaussian_instance("independent")
        report = check_constraints(inst, lambda a, u: (int(2.0 < u < 4.0), 0), GridSpec(20, 20))
        assert report.violations["monotone_in_u"].max_violation == 1.0

    def test_report_serializes(self):
        sol = solved("power")
        data = json.loads(json.dumps(check_constraints(sol.instance, sol, GridSpec(40, 40)).to_dict()))
        assert set(data["constraints"]) == set(CONSTRAINTS)
        assert data["grid"] == {"n_alpha": 40, "n_u": 40}
