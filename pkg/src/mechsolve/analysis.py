"""Welfare-gap curves, parameter sweeps and region rasters exported as data."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import IO, Iterable, Sequence

import numpy as np

from .dists import QuadratureConfig
from .errors import DegenerateDenominator, MechanismError
from .model import ProblemInstance, expected_welfare_above_cut, first_best_expected_welfare
from .solver import DEFAULT_EPS, MechanismSolution, Region, classify, exclusive_cut, solve_mechanism

GAP_FLOOR = 1e-12
GAP_TOLERANCE = 1e-12
SWEEP_PARAMS = ("v", "K")


@dataclass(frozen=True)
class GapPoint:
    u: float
    fb_welfare: float
    constrained_welfare: float
    gap: float


@dataclass(frozen=True)
class SweepRow:
    param_name: str
    param_value: float
    u_bot: float | None = None
    u_top: float | None = None
    alpha_opt: float | None = None
    objective: float | None = None
    error: str | None = None


@dataclass(frozen=True)
class RegionRaster:
    alpha_grid: np.ndarray
    u_grid: np.ndarray
    cells: list  # cells[i][j] is the region at (alpha_grid[i], u_grid[j])

    def counts(self) -> dict:
        out = {r: 0 for r in Region}
        for row in self.cells:
            for r in row:
                out[r] += 1
        return out


def constrained_expected_welfare(
    inst: ProblemInstance, sol: MechanismSolution, u: float, cfg: QuadratureConfig | None = None
) -> float:
    """Expected welfare over alpha at entrant value u under the solved allocation."""
    return expected_welfare_above_cut(inst, u, exclusive_cut(sol, u), cfg)


def gap_point(inst, sol, u, cfg=None) -> GapPoint:
    fb = first_best_expected_welfare(inst, u, cfg)
    if fb <= GAP_FLOOR:
        raise DegenerateDenominator(f"first-best welfare {fb:.3g} at u={u} is at or below the floor")
    cw = constrained_expected_welfare(inst, sol, u, cfg)
    diff = fb - cw
    gap = 0.0 if abs(diff) < GAP_TOLERANCE else diff / fb
    return GapPoint(float(u), fb, cw, gap)


def gap_curve(
    inst: ProblemInstance, sol: MechanismSolution, u_grid: Iterable[float], cfg: QuadratureConfig | None = None
) -> list[GapPoint]:
    """Relative welfare loss against first best at each u of the grid."""
    g = inst.g
    out = []
    for u in u_grid:
        u = float(u)
        if not g.support_lo <= u <= g.support_hi:
            raise ValueError(f"u={u} lies outside the support of g")
        out.append(gap_point(inst, sol, u, cfg))
    return out


def sweep(
    template: ProblemInstance,
    param: str,
    values: Sequence[float],
    eps: float = DEFAULT_EPS,
    cfg: QuadratureConfig | None = None,
) -> list[SweepRow]:
    """Solve the template with ``param`` replaced by each value; failures land in the row."""
    if param not in SWEEP_PARAMS:
        raise ValueError(f"param must be one of {SWEEP_PARAMS}, got {param!r}")
    rows = []
    for value in values:
        value = float(value)
        try:
            sol = solve_mechanism(template.replace(**{param: value}), eps, cfg)
        except (MechanismError, ValueError) as exc:
            rows.append(SweepRow(param, value, error=f"{type(exc).__name__}: {exc}"))
            continue
        rows.append(SweepRow(param, value, sol.u_bot, sol.u_top, sol.alpha_opt, sol.objective))
    return rows


def region_raster(inst: ProblemInstance, sol: MechanismSolution, n_alpha: int, n_u: int) -> RegionRaster:
    """Classify the center of every cell of an ``n_alpha`` by ``n_u`` partition of the supports."""
    if n_alpha < 1 or n_u < 1:
        raise ValueError("raster needs at least one cell per axis")
    f, g = inst.f, inst.g
    ha = (f.support_hi - f.support_lo) / n_alpha
    hu = (g.support_hi - g.support_lo) / n_u
    alphas = f.support_lo + ha * (np.arange(n_alpha) + 0.5)
    us = g.support_lo + hu * (np.arange(n_u) + 0.5)
    cells = [[classify(sol, float(a), float(u)) for u in us] for a in alphas]
    return RegionRaster(alphas, us, cells)


# ---------------------------------------------------------------------------
# CSV export


def _fmt(x) -> str:
    return "" if x is None else f"{x:.12g}"


def _writer(fh: IO[str]):
    return csv.writer(fh, lineterminator="\n")


def write_gap_csv(points: Iterable[GapPoint], fh: IO[str]) -> None:
    w = _writer(fh)
    w.writerow(["u", "fb", "constrained", "gap"])
    for p in points:
        w.writerow([_fmt(p.u), _fmt(p.fb_welfare), _fmt(p.constrained_welfare), _fmt(p.gap)])


def write_sweep_csv(rows: Iterable[SweepRow], fh: IO[str]) -> None:
    w = _writer(fh)
    w.writerow(["param", "value", "u_bot", "u_top", "alpha_opt", "objective"])
    for r in rows:
        w.writerow([r.param_name, _fmt(r.param_value), _fmt(r.u_bot), _fmt(r.u_top), _fmt(r.alpha_opt), _fmt(r.objective)])


def write_raster_csv(raster: RegionRaster, fh: IO[str]) -> None:
    w = _writer(fh)
    w.writerow(["alpha", "u", "region"])
    for a, row in zip(raster.alpha_grid, raster.cells):
        for u, region in zip(raster.u_grid, row):
            w.writerow([_fmt(float(a)), _fmt(float(u)), region.value])
