"""Exception hierarchy shared by every module of the package."""


class MechanismError(Exception):
    """Base class for all errors raised by mechsolve."""


class OutOfSupport(MechanismError, ValueError):
    """A point lies outside the support of a density."""


class OutOfRange(MechanismError, ValueError):
    """A probability argument lies outside [0, 1]."""


class ZeroDensity(MechanismError, ArithmeticError):
    """Density too close to zero for the hazard residual to be defined."""


class Nonconvergent(MechanismError, ArithmeticError):
    """Adaptive quadrature exhausted its subdivision budget."""


class DegenerateInput(MechanismError, ValueError):
    """An operation is undefined for the given arguments."""


class DegenerateDenominator(MechanismError, ArithmeticError):
    """A ratio has a denominator at or below the positivity floor."""


class InvalidInstance(MechanismError, ValueError):
    """A problem instance violates a model invariant."""


class RegularityViolated(InvalidInstance):
    """The hazard residual of the entrant's prior is not non-increasing."""


class KBelowThreshold(MechanismError, ValueError):
    """Inspection cost is below the level at which the budget binds."""

    def __init__(self, K: float, k_low: float):
        self.K = K
        self.k_low = k_low
        super().__init__(
            f"inspection cost K={K:.12g} is below k_low={k_low:.12g}; "
            "the small-K regime is not supported"
        )


class NoFeasiblePair(MechanismError, RuntimeError):
    """The grid oracle found no cutoff pair satisfying the budget."""


class OutOfScope(MechanismError, ValueError):
    """Requested computation lies outside the supported model scope."""
