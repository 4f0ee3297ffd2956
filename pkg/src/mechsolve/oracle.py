"""Brute-force verification of solved mechanisms.

``grid_solve`` enumerates every cutoff pair on a uniform u-grid and evaluates
value and budget with fixed-grid composite Simpson rules, sharing no code with
the adaptive quadrature in :mod:`mechsolve.solver`. ``check_constraints``
evaluates a policy as a black box on an (alpha, u) grid.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable, Union

import numpy as np
from scipy.integrate import cumulative_simpson

from .errors import NoFeasiblePair
from .model import InterferenceModel, ProblemInstance
from .solver import MechanismSolution, allocation

MAX_GRID = 2048
FEASIBILITY_TOL = 1e-9
BISECTION_STEPS = 60
BUDGET_PANELS = 800


@dataclass(frozen=True)
class GridSpec:
    n_alpha: int = 400
    n_u: int = 400

    def __post_init__(self):
        for name in ("n_alpha", "n_u"):
            n = getattr(self, name)
            if not 2 <= n <= MAX_GRID:
                raise ValueError(f"{name} must lie in [2, {MAX_GRID}], got {n}")


@dataclass(frozen=True)
class OracleResult:
    best_u_bot: float
    best_u_top: float
    best_alpha_opt: float | None
    best_objective: float
    best_residual: float
    feasible_count: int
    u_step: float


def _pdf_vec(dist, xs):
    return np.array([dist.pdf(float(x)) for x in xs])


def _tail_integral(y, xs):
    """``int_{xs[k]}^{xs[-1]} y`` for every k by cumulative Simpson from the right."""
    head = cumulative_simpson(y, x=xs, initial=0.0)
    return head[-1] - head


def _cumulative(y, xs):
    return cumulative_simpson(y, x=xs, initial=0.0)


def _tables(inst, grid):
    f, g, v, K = inst.f, inst.g, inst.v, inst.K
    al = np.linspace(f.support_lo, f.support_hi, grid.n_alpha)
    us = np.linspace(g.support_lo, g.support_hi, grid.n_u)
    fa, gu = _pdf_vec(f, al), _pdf_vec(g, us)

    tail = _tail_integral(fa, al)
    G = _cumulative(gu, us)
    d = 1.0 - G - us * gu
    # below the support of g the payment density is 1
    W1 = g.support_lo + _cumulative(d, us)

    cand = np.flatnonzero(us <= v + 1e-12)
    if cand.size == 0:
        raise NoFeasiblePair("no grid point of g's support lies at or below v")
    nc = cand.size

    if inst.model is InterferenceModel.INDEPENDENT:
        capped = _tail_integral(fa * np.minimum(v, al), al)
        inner0 = np.interp(0.0, al, capped) - us * np.interp(0.0, al, tail)
        V1 = _cumulative(gu * inner0, us)
        objective = np.full((nc, nc), -np.inf)
        residual = np.full((nc, nc), -np.inf)
        for jt, t in enumerate(cand):
            x = us + v - us[t]
            s = np.interp(x, al, tail, left=1.0, right=0.0)
            m = np.interp(x, al, capped, left=capped[0], right=0.0)
            cv = _cumulative(gu * (m - us * s), us)
            cw = _cumulative(s * (d - K * gu), us)
            b = cand[: jt + 1]
            objective[: jt + 1, jt] = V1[b] + cv[t] - cv[b]
            residual[: jt + 1, jt] = W1[b] + cw[t] - cw[b]
        a_opt = None
    else:
        # T[k, j] = int_{al_k} f(alpha) (min(v, alpha u_j) - u_j) d alpha
        integrand = fa[:, None] * (np.minimum(v, al[:, None] * us[None, :]) - us[None, :])
        head = cumulative_simpson(integrand, x=al, axis=0, initial=0.0)
        T = head[-1][None, :] - head
        CT = cumulative_simpson(gu[None, :] * T, x=us, axis=1, initial=0.0)
        # row 0 integrates over the whole support of f
        V1 = CT[0]

        bi, ti = np.triu_indices(nc)
        b, t = cand[bi], cand[ti]
        c0 = W1[b]
        B = W1[t] - W1[b] - K * (G[t] - G[b])
        cdf_tab = 1.0 - tail
        s1 = float(np.interp(1.0, al, tail, left=1.0, right=0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            target = np.where(B < 0, 1.0 + c0 / np.where(B < 0, B, -1.0), 1.0)
        binding = (B < 0) & (c0 + B * s1 < 0)
        a_pair = np.where(binding, np.interp(target, cdf_tab, al), 1.0)
        a_pair = np.clip(a_pair, 1.0, f.support_hi)
        pos = np.clip((a_pair - al[0]) / (al[1] - al[0]), 0.0, grid.n_alpha - 1.0)
        k0 = np.minimum(np.floor(pos).astype(int), grid.n_alpha - 2)
        w = pos - k0
        band = (1.0 - w) * (CT[k0, t] - CT[k0, b]) + w * (CT[k0 + 1, t] - CT[k0 + 1, b])
        s_pair = np.interp(a_pair, al, tail, left=1.0, right=0.0)
        objective = np.full((nc, nc), -np.inf)
        residual = np.full((nc, nc), -np.inf)
        objective[bi, ti] = V1[b] + band
        residual[bi, ti] = c0 + B * s_pair
        a_opt = np.full((nc, nc), np.nan)
        a_opt[bi, ti] = a_pair
    return us, cand, objective, residual, a_opt


def grid_solve(inst: ProblemInstance, grid: GridSpec = GridSpec()) -> OracleResult:
    """Exhaustive search over cutoff pairs ``u_bot <= u_top <= v`` on the u-grid.

    Power interference: every pair balances the budget through its own
    ``alpha_opt``, so the best grid pair is returned. Independent
    interference: ``u_top`` is refined off the grid by a sign-change scan of
    the residual along each row.
    """
    us, cand, objective, residual, a_opt = _tables(inst, grid)
    feasible = residual >= -FEASIBILITY_TOL
    count = int(np.count_nonzero(feasible))
    if count == 0:
        raise NoFeasiblePair("every cutoff pair violates the discretized budget")
    step = float(us[1] - us[0])
    if a_opt is None:
        return _best_by_sign_change(us[cand], objective, residual, feasible, count, step)
    bi, ti = np.nonzero(feasible)
    vals = objective[bi, ti]
    # max objective, then smallest u_bot, then largest u_top
    order = np.lexsort((-ti, bi, -vals))
    kb, kt = int(bi[order[0]]), int(ti[order[0]])
    return OracleResult(
        best_u_bot=float(us[cand[kb]]),
        best_u_top=float(us[cand[kt]]),
        best_alpha_opt=float(a_opt[kb, kt]),
        best_objective=float(objective[kb, kt]),
        best_residual=float(residual[kb, kt]),
        feasible_count=count,
        u_step=step,
    )


def _best_by_sign_change(ucand, objective, residual, feasible, count, step):
    """Per grid u_bot, locate the budget root in u_top by linear interpolation
    between the last feasible grid point and its infeasible neighbour."""
    nc = ucand.size
    best = None
    for kb in range(nc):
        ok = feasible[kb, kb:]
        if not ok.any():
            continue
        j = kb + int(np.flatnonzero(ok)[-1])
        z, val, res = ucand[j], objective[kb, j], residual[kb, j]
        if j + 1 < nc:
            r0, r1 = residual[kb, j], residual[kb, j + 1]
            w = min(max(r0 / (r0 - r1), 0.0), 1.0)
            z = ucand[j] + w * (ucand[j + 1] - ucand[j])
            val = objective[kb, j] + w * (objective[kb, j + 1] - objective[kb, j])
            res = r0 + w * (r1 - r0)
        key = (val, -ucand[kb], z)
        if best is None or key > best[0]:
            best = (key, ucand[kb], z, val, res)
    _, u_bot, u_top, val, res = best
    return OracleResult(float(u_bot), float(u_top), None, float(val), float(res), count, step)


def pair_tables(inst: ProblemInstance, grid: GridSpec = GridSpec()):
    """Candidate u-values with objective and budget residual for every grid pair.

    Rows index ``u_bot`` and columns ``u_top``; entries with ``u_top < u_bot``
    hold ``-inf``.
    """
    us, cand, objective, residual, _ = _tables(inst, grid)
    return us[cand], objective, residual


# ---------------------------------------------------------------------------
# constraint checking

Policy = Callable[[float, float], tuple]
CONSTRAINTS = ("ic_incumbent", "inspect_requires_exclusive", "monotone_in_u", "monotone_in_alpha")


@dataclass(frozen=True)
class Violation:
    max_violation: float
    alpha: float | None = None
    u: float | None = None


@dataclass
class ConstraintReport:
    violations: dict
    budget_residual: float
    budget_violation: float
    band_nonempty: bool
    grid: GridSpec
    notes: list = field(default_factory=list)

    def max_violation(self) -> float:
        return max([v.max_violation for v in self.violations.values()] + [self.budget_violation])

    def ok(self, tol: float = 1e-6) -> bool:
        return self.max_violation() <= tol and not self.notes

    def to_dict(self) -> dict:
        return {
            "constraints": {k: asdict(v) for k, v in self.violations.items()},
            "budget": {
                "residual": self.budget_residual,
                "violation": self.budget_violation,
                "band_nonempty": self.band_nonempty,
            },
            "grid": asdict(self.grid),
            "notes": list(self.notes),
        }


def _policy_parts(inst, policy):
    if isinstance(policy, MechanismSolution):
        sol = policy
        breaks = [sol.u_bot, sol.u_top]
        if inst.model is InterferenceModel.INDEPENDENT:
            shift = inst.v - sol.u_top
            breaks += [inst.f.support_lo - shift, inst.f.support_hi - shift]
        return (lambda a, u: allocation(sol, a, u)), breaks
    if isinstance(policy, tuple):
        return policy[0], list(policy[1])
    return policy, []


def _upper_mass(inst, indicator, u):
    """f-mass of ``{alpha : indicator(alpha, u) = 1}``, assuming the set is an upper interval."""
    f = inst.f
    lo, hi = f.support_lo, f.support_hi
    if not indicator(hi, u):
        return 0.0
    if indicator(lo, u):
        return 1.0
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        if indicator(mid, u):
            hi = mid
        else:
            lo = mid
    return 1.0 - f.cdf(hi)


def _composite_simpson(fn, a, b, panels):
    if b <= a:
        return 0.0
    xs = np.linspace(a, b, panels + 1)
    # the policy jumps at piece edges: use one-sided limits there
    nudge = 1e-9 * (b - a)
    xs[0], xs[-1] = a + nudge, b - nudge
    ys = np.array([fn(float(x)) for x in xs])
    h = (b - a) / panels
    return h / 3.0 * (ys[0] + ys[-1] + 4.0 * ys[1:-1:2].sum() + 2.0 * ys[2:-1:2].sum())


def discretized_budget(inst: ProblemInstance, policy, u_breaks=(), panels: int = BUDGET_PANELS) -> float:
    """Expected entry fees minus inspection spend of a black-box threshold policy."""
    g, K = inst.g, inst.K

    def integrand(u):
        a_mass = _upper_mass(inst, lambda al, x: policy(al, x)[0], u)
        c_mass = _upper_mass(inst, lambda al, x: policy(al, x)[1], u)
        d = 1.0 - g.cdf(u) - u * g.pdf(u)
        return a_mass * d - K * g.pdf(u) * c_mass

    hi = g.support_hi
    cuts = sorted({0.0, hi, g.support_lo, *(x for x in u_breaks if 0.0 < x < hi)})
    return sum(_composite_simpson(integrand, a, b, panels) for a, b in zip(cuts, cuts[1:]))


def check_constraints(
    inst: ProblemInstance,
    policy: Union[MechanismSolution, Policy, tuple],
    grid: GridSpec = GridSpec(200, 200),
) -> ConstraintReport:
    """Evaluate a binary policy on the grid and report the worst breach of each constraint.

    ``policy`` is a solved mechanism, a callable ``(alpha, u) -> (a, c)`` or a
    pair ``(callable, u_breaks)`` naming the u-values where the policy's
    alpha-cut jumps or kinks.
    """
    fn, u_breaks = _policy_parts(inst, policy)
    f, g = inst.f, inst.g
    al = np.linspace(f.support_lo, f.support_hi, grid.n_alpha)
    us = np.linspace(g.support_lo, g.support_hi, grid.n_u)
    A = np.zeros((grid.n_alpha, grid.n_u))
    C = np.zeros_like(A)
    for i, a in enumerate(al):
        for j, u in enumerate(us):
            A[i, j], C[i, j] = fn(float(a), float(u))
    base = np.array([fn(0.0, float(u))[0] for u in us])
    notes = []
    if not (np.isin(A, (0, 1)).all() and np.isin(C, (0, 1)).all()):
        notes.append("policy is not binary on the grid")

    def worst(viol):
        viol = np.maximum(viol, 0.0)
        i, j = np.unravel_index(int(np.argmax(viol)), viol.shape)
        m = float(viol[i, j])
        return Violation(m, float(al[i]), float(us[j])) if m > 0 else Violation(0.0)

    violations = {
        "ic_incumbent": worst(A * (1.0 - C) - base[None, :]),
        "inspect_requires_exclusive": worst(C - A),
        "monotone_in_u": worst(A - np.minimum.accumulate(A, axis=1)),
        "monotone_in_alpha": worst(base[None, :] - A),
    }
    residual = discretized_budget(inst, fn, u_breaks)
    band = bool(C.any())
    budget_violation = abs(residual) if band else max(0.0, -residual)
    return ConstraintReport(violations, float(residual), float(budget_violation), band, grid, notes)


def first_best_policy(inst: ProblemInstance) -> tuple:
    """First-best allocation with no inspection, as a black-box policy with its u-breaks."""
    from .model import first_best_allocation

    def fn(alpha, u):
        return first_best_allocation(inst, alpha, u).a, 0

    return fn, [inst.v]


def objective_bound(inst: ProblemInstance, grid: GridSpec) -> float:
    """Agreement tolerance between oracle and solver objectives for a grid.

    Moving either cutoff by one grid cell changes the objective by at most
    ``max g * v * step``.
    """
    step = (inst.g.support_hi - inst.g.support_lo) / (grid.n_u - 1)
    lipschitz = max(inst.g.pdf(u) for u in np.linspace(inst.g.support_lo, inst.g.support_hi, 65)) * inst.v
    return max(2.0 * lipschitz * step, 1e-3)


__all__ = [
    "GridSpec",
    "OracleResult",
    "ConstraintReport",
    "Violation",
    "grid_solve",
    "check_constraints",
    "discretized_budget",
    "first_best_policy",
    "objective_bound",
    "CONSTRAINTS",
]
