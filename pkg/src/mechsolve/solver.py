"""Optimal allocation-and-inspection mechanism: cutoffs, thresholds, payments.

The optimal policy is characterized by two cutoffs on the entrant's value,
``u_bot <= u_top``, plus (for power interference) an alpha cutoff
``alpha_opt``. Below ``u_bot`` the incumbent keeps exclusive use without
inspection, above the type-dependent threshold the resource is shared, and in
between exclusivity is granted only after an audit.

Inner integrals over alpha are evaluated in closed form through ``F`` and the
first partial moment of ``f``; only the outer integral over u goes through
adaptive quadrature, split at every kink of its integrand.
"""
from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .dists import DENSITY_FLOOR, QuadratureConfig, Uniform, integrate
from .errors import DegenerateDenominator, InvalidInstance, KBelowThreshold, OutOfScope
from .model import InterferenceModel, ProblemInstance

log = logging.getLogger(__name__)

DEFAULT_EPS = 1e-8
TRUTH_TOLERANCE = 1e-9
OUTER_SCAN = 64
INNER_SCAN = 16
ROOT_SCAN = 32

INDEPENDENT = InterferenceModel.INDEPENDENT
POWER = InterferenceModel.POWER


class Region(enum.Enum):
    EXCLUSIVE = "exclusive"
    INSPECT = "inspect"
    SHARE = "share"


@dataclass(frozen=True)
class MechanismOutcome:
    inspected: bool
    allocation: int
    payment: float


def _round12(x):
    return None if x is None else float(f"{x:.12g}")


@dataclass(frozen=True)
class MechanismSolution:
    u_bot: float
    u_top: float
    alpha_opt: float | None
    k_low: float
    objective: float
    budget_residual: float
    eps: float
    instance: ProblemInstance
    u_infinity: float | None = None

    @property
    def band_width(self) -> float:
        return self.u_top - self.u_bot

    def invariant_violations(self, tol: float = 1e-9) -> list[str]:
        """Names of the structural invariants this solution breaks (empty if none)."""
        out = []
        if not (-tol <= self.u_bot <= self.u_top + tol):
            out.append(f"cutoff ordering: need 0 <= u_bot <= u_top, got u_bot={self.u_bot}, u_top={self.u_top}")
        if self.u_top > self.instance.v + tol:
            out.append(f"cutoff ordering: u_top={self.u_top} exceeds v={self.instance.v}")
        if self.instance.model is POWER:
            a = self.alpha_opt
            if a is None or not (1.0 - tol <= a <= self.instance.alpha_max + tol):
                out.append(f"alpha_opt={a} outside [1, {self.instance.alpha_max}]")
        return out

    def to_dict(self) -> dict:
        out = {
            "u_bot": _round12(self.u_bot),
            "u_top": _round12(self.u_top),
        }
        if self.alpha_opt is not None:
            out["alpha_opt"] = _round12(self.alpha_opt)
        out.update(
            k_low=_round12(self.k_low),
            objective=_round12(self.objective),
            budget_residual=_round12(self.budget_residual),
            eps=_round12(self.eps),
        )
        if self.u_infinity is not None:
            out["u_infinity"] = _round12(self.u_infinity)
        out["instance"] = self.instance.to_dict()
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: dict, instance: ProblemInstance | None = None, base_dir=None) -> "MechanismSolution":
        if instance is None:
            if "instance" not in data:
                raise ValueError("solution carries no instance and none was supplied")
            instance = ProblemInstance.from_dict(data["instance"], base_dir)
        return cls(
            u_bot=float(data["u_bot"]),
            u_top=float(data["u_top"]),
            alpha_opt=None if data.get("alpha_opt") is None else float(data["alpha_opt"]),
            k_low=float(data["k_low"]),
            objective=float(data["objective"]),
            budget_residual=float(data["budget_residual"]),
            eps=float(data.get("eps", DEFAULT_EPS)),
            instance=instance,
            u_infinity=None if data.get("u_infinity") is None else float(data["u_infinity"]),
        )

    @classmethod
    def from_json(cls, path: str | Path, instance: ProblemInstance | None = None) -> "MechanismSolution":
        path = Path(path)
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh), instance, base_dir=path.parent)


# ---------------------------------------------------------------------------
# closed-form pieces


def _tail(inst, x):
    """Mass of f above x."""
    return 1.0 - inst.f.cdf(x)


def _d(inst, u):
    g = inst.g
    return 1.0 - g.cdf(u) - u * g.pdf(u)


def _capped_value_above(inst, x, u):
    """``int_x^alpha_max f(alpha) min(v, t(alpha, u)) d alpha``."""
    f, v = inst.f, inst.v
    if inst.model is INDEPENDENT:
        if x >= v:
            return v * _tail(inst, x)
        return f.partial_mean(v) - f.partial_mean(x) + v * _tail(inst, v)
    if u <= 0:
        return 0.0
    y = v / u
    if y <= x:
        return v * _tail(inst, x)
    return u * (f.partial_mean(y) - f.partial_mean(x)) + v * _tail(inst, y)


def _net_value_above(inst, x, u):
    """``int_x f(alpha) (min(v, t) - u) d alpha``: value of exclusivity above the alpha cut x."""
    return _capped_value_above(inst, x, u) - u * _tail(inst, x)


def _w1(inst, u_bot):
    # int_0^z d(u) du = z (1 - G(z)) exactly
    return u_bot * (1.0 - inst.g.cdf(u_bot))


def _band_mass_term(inst, u_bot, u_top):
    """``B = int_{u_bot}^{u_top} (d(u) - K g(u)) du`` in closed form."""
    g = inst.g
    return _w1(inst, u_top) - _w1(inst, u_bot) - inst.K * (g.cdf(u_top) - g.cdf(u_bot))


def _u_breaks(inst):
    g = inst.g
    out = [g.support_lo, g.support_hi]
    if inst.model is POWER:
        for edge in (inst.f.support_lo, inst.f.support_hi):
            if edge > 0:
                out.append(inst.v / edge)
    return out


def _v1(inst, u_bot, cfg):
    if u_bot <= 0:
        return 0.0
    g = inst.g
    if inst.model is INDEPENDENT:
        mean_capped = _capped_value_above(inst, 0.0, 0.0)
        return mean_capped * g.cdf(u_bot) - g.partial_mean(u_bot)
    return integrate(lambda u: g.pdf(u) * _net_value_above(inst, 0.0, u), 0.0, u_bot, cfg, _u_breaks(inst))


def _independent_cut_breaks(inst, u_top):
    shift = inst.v - u_top
    return _u_breaks(inst) + [inst.f.support_lo - shift, inst.f.support_hi - shift]


def _v2(inst, u_bot, u_top, cut, cfg, breaks=()):
    if u_top <= u_bot:
        return 0.0
    g = inst.g
    return integrate(lambda u: g.pdf(u) * _net_value_above(inst, cut(u), u), u_bot, u_top, cfg, breaks)


def _w2_generic(inst, u_bot, u_top, cut, cfg, breaks=()):
    if u_top <= u_bot:
        return 0.0
    g, K = inst.g, inst.K
    return integrate(lambda u: _tail(inst, cut(u)) * (_d(inst, u) - K * g.pdf(u)), u_bot, u_top, cfg, breaks)


def _independent_psi(inst, u_bot, u_top, cfg):
    shift = inst.v - u_top
    return _w1(inst, u_bot) + _w2_generic(
        inst, u_bot, u_top, lambda u: u + shift, cfg, _independent_cut_breaks(inst, u_top)
    )


# ---------------------------------------------------------------------------
# public operations


def k_low(inst: ProblemInstance, cfg: QuadratureConfig | None = None) -> float:
    """Inspection cost above which the budget constraint binds at the optimum.

    Ratio of expected payments to expected inspection mass under the first-best
    allocation, both restricted to ``u <= min(v, u_max)``.
    """
    top = min(inst.v, inst.u_max)
    if top <= 0:
        raise DegenerateDenominator("empty integration range for k_low")
    if inst.model is INDEPENDENT:
        f, g = inst.f, inst.g
        breaks = (f.support_lo, f.support_hi, g.support_lo, g.support_hi)
        num = integrate(lambda u: _tail(inst, u) * _d(inst, u), 0.0, top, cfg, breaks)
        den = integrate(lambda u: _tail(inst, u) * g.pdf(u), 0.0, top, cfg, breaks)
    else:
        share = _tail(inst, 1.0)
        num = share * _w1(inst, top)
        den = share * inst.g.cdf(top)
    if den <= DENSITY_FLOOR:
        raise DegenerateDenominator(f"k_low denominator {den:.3g} is at or below the floor {DENSITY_FLOOR}")
    return num / den


def alpha_opt_from_terms(f, c0: float, b: float) -> float:
    """Alpha cutoff from the budget raised below the band ``c0`` and the band's net term ``b``."""
    if b >= 0:
        return 1.0
    if c0 + b * (1.0 - f.cdf(1.0)) >= 0:
        return 1.0
    return min(max(f.ppf(1.0 + c0 / b), 1.0), f.support_hi)


def alpha_opt(inst: ProblemInstance, u_bot: float, u_top: float) -> float:
    if inst.model is not POWER:
        raise OutOfScope("alpha_opt is defined for power interference only")
    if u_top <= u_bot:
        return 1.0
    return alpha_opt_from_terms(inst.f, _w1(inst, u_bot), _band_mass_term(inst, u_bot, u_top))


def _default_cut(inst, u_bot, u_top):
    if inst.model is INDEPENDENT:
        shift = inst.v - u_top
        return (lambda u: u + shift), _independent_cut_breaks(inst, u_top)
    a = alpha_opt(inst, u_bot, u_top)
    return (lambda u: a), _u_breaks(inst) + [inst.v / a]


def budget_residual(
    inst: ProblemInstance,
    u_bot: float,
    u_top: float,
    alpha_cut: Callable[[float], float] | None = None,
    cfg: QuadratureConfig | None = None,
) -> float:
    """Expected entry fees minus expected inspection spend for the given cutoffs.

    ``alpha_cut(u)`` is the lower alpha limit of the inspection band; by default
    it is ``u + v - u_top`` (independent) or the constant ``alpha_opt`` (power).
    """
    if not 0 <= u_bot <= u_top:
        raise ValueError(f"need 0 <= u_bot <= u_top, got {u_bot}, {u_top}")
    if alpha_cut is None:
        if inst.model is INDEPENDENT:
            return _independent_psi(inst, u_bot, u_top, cfg)
        a = alpha_opt(inst, u_bot, u_top)
        return _w1(inst, u_bot) + _tail(inst, a) * _band_mass_term(inst, u_bot, u_top)
    return _w1(inst, u_bot) + _w2_generic(inst, u_bot, u_top, alpha_cut, cfg, _u_breaks(inst))


def objective_value(
    inst: ProblemInstance,
    u_bot: float,
    u_top: float,
    alpha_cut: Callable[[float], float] | None = None,
    cfg: QuadratureConfig | None = None,
) -> float:
    """Welfare gain over all-sharing: exclusive block below ``u_bot`` plus the inspection band."""
    if not 0 <= u_bot <= u_top:
        raise ValueError(f"need 0 <= u_bot <= u_top, got {u_bot}, {u_top}")
    if alpha_cut is None:
        cut, breaks = _default_cut(inst, u_bot, u_top)
    else:
        cut, breaks = alpha_cut, _u_breaks(inst)
    return _v1(inst, u_bot, cfg) + _v2(inst, u_bot, u_top, cut, cfg, breaks)


def _monotone_band(inst, u_bot):
    """True when d - K g <= 0 on [u_bot, v], so the residual is non-increasing in u_top."""
    g = inst.g
    if u_bot >= g.support_hi:
        return True
    if u_bot < g.support_lo:
        return False
    density = g.pdf(u_bot)
    if density < DENSITY_FLOOR:
        return False
    return inst.K >= (1.0 - g.cdf(u_bot)) / density - u_bot


def _last_nonnegative(fn, lo, hi, monotone, xtol):
    """Largest z in [lo, hi] with fn(z) >= 0, given fn(lo) >= 0 > fn(hi)."""
    if not monotone:
        # walk down from the top to bracket the highest sign change
        step = (hi - lo) / ROOT_SCAN
        upper = hi
        for i in range(1, ROOT_SCAN + 1):
            z = hi - i * step if i < ROOT_SCAN else lo
            if fn(z) >= 0:
                lo, hi = z, upper
                break
            upper = z
    root = brentq(fn, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps)
    return root


def _root_tol(eps):
    return max(eps * 1e-4, 1e-14)


def _top_limit(inst):
    return inst.v


def _power_band_value(inst, u_bot, z, cfg):
    a = alpha_opt(inst, u_bot, z)
    return _v2(inst, u_bot, z, lambda u: a, cfg, _u_breaks(inst) + [inst.v / a])


def _maximize(fn, lo, hi, n_scan, tol):
    """Scan ``fn`` on ``n_scan + 1`` points, then refine around the best one.

    Returns ``(x, value, unimodal)`` where ``unimodal`` reports whether the
    scanned values rise then fall at most once.
    """
    if hi <= lo:
        return lo, fn(lo), True
    xs = np.linspace(lo, hi, n_scan + 1)
    vals = np.array([fn(float(x)) for x in xs])
    i = int(np.argmax(vals))
    diffs = np.sign(np.diff(vals))
    diffs = diffs[diffs != 0]
    unimodal = int(np.count_nonzero(np.diff(diffs) != 0)) <= 1 and (diffs.size == 0 or diffs[0] >= diffs[-1])
    a, b = float(xs[max(i - 1, 0)]), float(xs[min(i + 1, n_scan)])
    best_x, best_val = float(xs[i]), float(vals[i])
    res = minimize_scalar(lambda x: -fn(x), bounds=(a, b), method="bounded", options={"xatol": tol})
    if -res.fun > best_val:
        best_x, best_val = float(res.x), float(-res.fun)
    return best_x, best_val, unimodal


def solve_u_top(
    inst: ProblemInstance, u_bot: float, eps: float = DEFAULT_EPS, cfg: QuadratureConfig | None = None
) -> float:
    """Best upper cutoff for a fixed lower cutoff.

    Independent interference: the largest ``z`` in ``[u_bot, v]`` whose budget
    residual is non-negative (``u_bot`` itself when even the empty band is
    unaffordable). Power interference: ``alpha_opt`` is recomputed for every
    candidate, which keeps the budget balanced by construction, so the band
    value is maximized over ``z`` directly.
    """
    top = _top_limit(inst)
    if u_bot >= top:
        return top
    monotone = _monotone_band(inst, u_bot)
    xtol = _root_tol(eps)
    if inst.model is INDEPENDENT:

        def psi(z):
            return _independent_psi(inst, u_bot, z, cfg)

        if psi(top) >= 0:
            return top
        if psi(u_bot) < 0:
            return u_bot
        return _last_nonnegative(psi, u_bot, top, monotone, xtol)

    share = _tail(inst, 1.0)
    c0 = _w1(inst, u_bot)

    def slack_at_one(z):
        return c0 + share * _band_mass_term(inst, u_bot, z)

    # alpha_opt stays at 1 up to z1, where the band value is increasing in z
    if slack_at_one(top) >= 0:
        return top
    z1 = _last_nonnegative(slack_at_one, u_bot, top, monotone, xtol)
    z, _, _ = _maximize(lambda x: _power_band_value(inst, u_bot, x, cfg), z1, top, INNER_SCAN, eps)
    return z


def _phi_of_u_bot(inst, u_bot, eps, cfg):
    u_top = solve_u_top(inst, u_bot, eps, cfg)
    if inst.model is INDEPENDENT:
        band = _v2(inst, u_bot, u_top, lambda u, s=inst.v - u_top: u + s, cfg, _independent_cut_breaks(inst, u_top))
    else:
        band = _power_band_value(inst, u_bot, u_top, cfg)
    return _v1(inst, u_bot, cfg) + band


def u_infinity(inst: ProblemInstance, numeric_fallback: bool = True, cfg: QuadratureConfig | None = None) -> float:
    """Limit of both cutoffs as inspection becomes prohibitively expensive.

    This is the single cutoff maximizing the exclusive-block value
    ``int_0^z g(u) E_alpha[min(v, t) - u] du``.
    """
    g = inst.g
    if inst.model is INDEPENDENT:
        # derivative g(z) (E[min(v, alpha)] - z): maximizer is the capped mean
        return min(_capped_value_above(inst, 0.0, 0.0), g.support_hi)
    f = inst.f
    if isinstance(f, Uniform) and isinstance(g, Uniform) and f.support_lo == 0 and f.support_hi >= 2:
        root = 0.5 * inst.v * (1.0 + math.sqrt(1.0 - 2.0 / f.support_hi))
        return min(root, g.support_hi)
    if not numeric_fallback:
        raise OutOfScope("closed-form limit cutoff needs uniform priors with alpha_max >= 2")
    return _power_u_infinity_numeric(inst, cfg)


def _power_u_infinity_numeric(inst, cfg):
    g = inst.g
    top = min(inst.v, g.support_hi)

    def h(u):
        return _net_value_above(inst, 0.0, u)

    grid = np.linspace(0.0, top, 257)
    vals = [h(float(u)) for u in grid]
    # local maxima of the cumulative value sit where h crosses from + to -
    candidates = [0.0, top]
    for i in range(len(grid) - 1):
        if vals[i] > 0 >= vals[i + 1]:
            candidates.append(brentq(h, float(grid[i]), float(grid[i + 1]), xtol=1e-14))
    breaks = _u_breaks(inst)
    best = max(
        candidates,
        key=lambda z: (integrate(lambda u: g.pdf(u) * h(u), 0.0, z, cfg, breaks), -z),
    )
    return best


def solve_mechanism(
    inst: ProblemInstance, eps: float = DEFAULT_EPS, cfg: QuadratureConfig | None = None
) -> MechanismSolution:
    """Optimal cutoffs for ``K >= k_low``.

    ``u_bot`` maximizes ``V1(u_bot) + V2(u_bot, u_top*(u_bot))`` over
    ``[0, v]`` by a 64-point scan followed by bounded Brent refinement around
    the best scan point.
    """
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if inst.model is POWER and not inst.alpha_max > 1:
        raise InvalidInstance(f"power interference needs alpha_max > 1, got {inst.alpha_max}")
    kl = k_low(inst, cfg)
    if inst.K < kl:
        raise KBelowThreshold(inst.K, kl)
    top = _top_limit(inst)
    u_bot, _, unimodal = _maximize(lambda z: _phi_of_u_bot(inst, z, eps, cfg), 0.0, top, OUTER_SCAN, eps)
    if not unimodal:
        log.info("outer objective is not unimodal on the scan grid; kept the global scan maximum")
    u_top = solve_u_top(inst, u_bot, eps, cfg)
    a_opt = alpha_opt(inst, u_bot, u_top) if inst.model is POWER else None
    objective = objective_value(inst, u_bot, u_top, cfg=cfg)
    residual = budget_residual(inst, u_bot, u_top, cfg=cfg)
    try:
        u_inf = u_infinity(inst, cfg=cfg)
    except OutOfScope:
        u_inf = None
    if u_inf is not None and not (u_bot - 1e-6 <= u_inf <= u_top + 1e-6):
        log.warning("limit cutoff %.6g lies outside [u_bot, u_top] = [%.6g, %.6g]", u_inf, u_bot, u_top)
    return MechanismSolution(u_bot, u_top, a_opt, kl, objective, residual, eps, inst, u_inf)


# ---------------------------------------------------------------------------
# thresholds and the mechanism itself


def phi_threshold(sol: MechanismSolution, alpha: float, u: float) -> float:
    """Largest entrant value still granted exclusive use at interference parameter ``alpha``."""
    inst = sol.instance
    if inst.model is INDEPENDENT:
        v = inst.v
        if alpha >= v:
            return sol.u_top
        if alpha > sol.u_bot + v - sol.u_top:
            return alpha - (v - sol.u_top)
        return sol.u_bot
    return min(sol.u_top, max(sol.u_bot, alpha * u / sol.alpha_opt))


def psi_threshold(sol: MechanismSolution, alpha: float, u: float) -> float:
    """Upper end of the audited range; zero where no audit can ever be triggered."""
    inst = sol.instance
    if inst.model is INDEPENDENT and alpha <= sol.u_bot + inst.v - sol.u_top:
        return 0.0
    return phi_threshold(sol, alpha, u)


def allocation(sol: MechanismSolution, alpha: float, u: float) -> tuple[int, int]:
    """Binary ``(a, c)``: exclusive iff ``u <= phi``; inspect iff ``u_bot < u <= psi``."""
    a = int(u <= phi_threshold(sol, alpha, u))
    c = int(a and sol.u_bot < u <= psi_threshold(sol, alpha, u))
    return a, c


def classify(sol: MechanismSolution, alpha: float, u: float) -> Region:
    a, c = allocation(sol, alpha, u)
    if not a:
        return Region.SHARE
    return Region.INSPECT if c else Region.EXCLUSIVE


def exclusive_cut(sol: MechanismSolution, u: float) -> float:
    """Alpha at and above which the solved policy grants exclusive use at value u."""
    if u <= sol.u_bot:
        return 0.0
    if u > sol.u_top:
        return math.inf
    if sol.instance.model is INDEPENDENT:
        return u + sol.instance.v - sol.u_top
    return sol.alpha_opt


def sharing_cutoff(sol: MechanismSolution, alpha: float) -> float:
    """Entrant value at which the allocation switches from exclusive to sharing for this alpha."""
    if sol.instance.model is INDEPENDENT:
        return phi_threshold(sol, alpha, 0.0)
    return sol.u_top if alpha >= sol.alpha_opt else sol.u_bot


def payment(sol: MechanismSolution, alpha: float, u: float) -> float:
    """Entry fee: zero under exclusive use, the sharing cutoff otherwise."""
    a, _ = allocation(sol, alpha, u)
    return 0.0 if a else sharing_cutoff(sol, alpha)


def run_mechanism(
    sol: MechanismSolution, reported_alpha: float, reported_u: float, true_alpha: float
) -> MechanismOutcome:
    """Apply the mechanism to a report pair; an audit exposing a false alpha forces sharing."""
    region = classify(sol, reported_alpha, reported_u)
    fee = payment(sol, reported_alpha, reported_u)
    if region is Region.INSPECT:
        truthful = abs(true_alpha - reported_alpha) <= TRUTH_TOLERANCE
        return MechanismOutcome(True, int(truthful), fee)
    return MechanismOutcome(False, int(region is Region.EXCLUSIVE), fee)
