"""Problem instances, interference technologies and the first-best benchmark."""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path

from .dists import DensitySpec, QuadratureConfig, check_regularity, integrate, parse_density
from .errors import DegenerateInput, InvalidInstance, RegularityViolated

REGULARITY_GRID = 200


class InterferenceModel(enum.Enum):
    INDEPENDENT = "independent"
    POWER = "power"

    @classmethod
    def parse(cls, text: "str | InterferenceModel") -> "InterferenceModel":
        if isinstance(text, cls):
            return text
        try:
            return cls(str(text).strip().lower())
        except ValueError:
            raise ValueError(f"unknown interference model {text!r}; use 'independent' or 'power'") from None


@dataclass(frozen=True)
class ProblemInstance:
    """Interference model, exclusive-use value ``v``, inspection cost ``K`` and the two priors.

    ``f`` is the prior of the incumbent's interference parameter alpha and
    ``g`` the prior of the entrant's value u. Both supports must lie in the
    non-negative half-line.
    """

    model: InterferenceModel
    v: float
    K: float
    f: DensitySpec
    g: DensitySpec

    def __post_init__(self):
        object.__setattr__(self, "model", InterferenceModel.parse(self.model))
        v, K = float(self.v), float(self.K)
        if not (math.isfinite(v) and v > 0):
            raise InvalidInstance(f"v must be positive and finite, got {self.v!r}")
        if not (math.isfinite(K) and K >= 0):
            raise InvalidInstance(f"K must be non-negative and finite, got {self.K!r}")
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "K", K)
        for name, dist in (("f", self.f), ("g", self.g)):
            if dist.support_lo < 0:
                raise InvalidInstance(f"{name} support must be non-negative, got lo={dist.support_lo}")
        report = check_regularity(self.g, REGULARITY_GRID)
        if not report.ok:
            lo, hi = report.first_violation
            raise RegularityViolated(f"hazard residual of g increases between u={lo:.6g} and u={hi:.6g}")

    @property
    def alpha_max(self) -> float:
        return self.f.support_hi

    @property
    def u_max(self) -> float:
        return self.g.support_hi

    def replace(self, **changes) -> "ProblemInstance":
        fields = dict(model=self.model, v=self.v, K=self.K, f=self.f, g=self.g)
        fields.update(changes)
        return ProblemInstance(**fields)

    def to_dict(self) -> dict:
        return {
            "model": self.model.value,
            "v": float(f"{self.v:.12g}"),
            "K": float(f"{self.K:.12g}"),
            "f": self.f.to_string(),
            "g": self.g.to_string(),
        }

    @classmethod
    def from_dict(cls, data: dict, base_dir: str | Path | None = None) -> "ProblemInstance":
        missing = {"model", "v", "K", "f", "g"} - set(data)
        if missing:
            raise ValueError(f"instance is missing fields: {', '.join(sorted(missing))}")
        return cls(
            InterferenceModel.parse(data["model"]),
            float(data["v"]),
            float(data["K"]),
            parse_density(data["f"], base_dir),
            parse_density(data["g"], base_dir),
        )

    @classmethod
    def from_json(cls, path: str | Path) -> "ProblemInstance":
        path = Path(path)
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh), base_dir=path.parent)


@dataclass(frozen=True)
class AllocationDecision:
    """Binary allocation ``a`` (1 = exclusive) and inspection flag ``c``."""

    a: int
    c: int = 0

    def __post_init__(self):
        if self.a not in (0, 1) or self.c not in (0, 1):
            raise ValueError(f"decisions are binary, got a={self.a!r}, c={self.c!r}")
        if self.c > self.a:
            raise ValueError("cannot inspect without granting exclusive use (c <= a)")


def interference(model: InterferenceModel, alpha: float, u: float) -> float:
    return alpha if model is InterferenceModel.INDEPENDENT else alpha * u


def alpha_star(model: InterferenceModel, u: float) -> float:
    """Smallest alpha at which exclusive use becomes efficient for an entrant of value u <= v."""
    if model is InterferenceModel.INDEPENDENT:
        return u
    if u == 0:
        raise DegenerateInput("alpha_star is undefined for power interference at u = 0")
    return 1.0


def welfare(inst: ProblemInstance, a: int, alpha: float, u: float) -> float:
    if a:
        return inst.v
    return max(inst.v - interference(inst.model, alpha, u), 0.0) + u


def first_best_allocation(inst: ProblemInstance, alpha: float, u: float) -> AllocationDecision:
    """Pointwise welfare-maximizing decision; ties go to exclusive use."""
    t = interference(inst.model, alpha, u)
    return AllocationDecision(int(min(inst.v, t) >= u))


def first_best_cut(inst: ProblemInstance, u: float) -> float:
    """Alpha above which first best grants exclusive use (``inf`` when it never does)."""
    if u > inst.v:
        return math.inf
    if u == 0:
        return 0.0
    return alpha_star(inst.model, u)


def expected_welfare_above_cut(
    inst: ProblemInstance, u: float, cut: float, cfg: QuadratureConfig | None = None
) -> float:
    """``E_alpha[welfare]`` for the policy that is exclusive exactly when ``alpha >= cut``."""
    f = inst.f
    lo, hi = f.support_lo, f.support_hi
    split = min(max(cut, lo), hi)
    exclusive = inst.v * (1.0 - f.cdf(split))
    if split <= lo:
        return exclusive
    # kink where interference reaches v
    if inst.model is InterferenceModel.INDEPENDENT:
        kink = inst.v
    else:
        kink = inst.v / u if u > 0 else math.inf

    def shared(alpha):
        return f.pdf(alpha) * (max(inst.v - interference(inst.model, alpha, u), 0.0) + u)

    return exclusive + integrate(shared, lo, split, cfg, breaks=(kink,))


def first_best_expected_welfare(inst: ProblemInstance, u: float, cfg: QuadratureConfig | None = None) -> float:
    return expected_welfare_above_cut(inst, u, first_best_cut(inst, u), cfg)

