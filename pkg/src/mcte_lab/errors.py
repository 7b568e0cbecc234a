"""Exception types shared across the laboratory."""


class MCTELabError(Exception):
    """Base class for all mcte-lab errors."""


class DomainError(MCTELabError):
    """Coordinate point lies outside the entropy surface's domain."""


class NonFiniteError(MCTELabError):
    """A surface evaluation overflowed or produced a non-finite value."""


class DegenerateIntensityError(MCTELabError):
    """An intensity |beta_i| fell below the floor; T_i = 1/beta_i is meaningless."""


class SymmetryViolationError(MCTELabError):
    """Finite-difference cross-derivatives disagree beyond tolerance (bad step size)."""


class DomainEscapeError(MCTELabError):
    """A loop or quadrature point left the surface domain."""


class StiffnessError(MCTELabError):
    """Level-set step size underflowed (path turned vertical in every parameterization)."""


class NonErgodicError(MCTELabError):
    """Markov chain mis-scaled or too correlated to yield a valid estimate."""


class ConfigError(MCTELabError):
    """Scenario configuration is malformed or contains unknown keys."""


class ComputationError(MCTELabError):
    """A scenario computation failed after configuration was accepted."""
