"""Exception hierarchy for the enslab package.

Exit-code mapping used by the command line driver:
  ConfigError            -> 1
  SolverError and kin    -> 2
  CheckFailure           -> 3
"""


class EnslabError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(EnslabError):
    """Invalid configuration text, key, or value."""


class DimensionMismatchError(EnslabError):
    """Field shape does not match the grid it claims to live on."""


class SolverError(EnslabError):
    """A linear solve failed to converge or broke down."""


class CompatibilityError(SolverError):
    """Source/boundary data violate the discrete divergence-theorem balance."""


class SolvabilityError(SolverError):
    """Volume divergence and boundary flux data are inconsistent (lift with
    boundary data, or solvability drift during boundary-relaxation stepping)."""


class CFLError(SolverError):
    """Time step too large for the advective stability bound dt <= h/(2 max|u|)."""


class CheckFailure(EnslabError):
    """A runtime-verified inequality or identity failed beyond the global slack."""
