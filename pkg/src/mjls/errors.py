"""Exception hierarchy shared across the package.

Everything user-facing derives from :class:`MjlsError` so callers (and the
CLI) can distinguish bad input from solver trouble with two except clauses.
"""

from __future__ import annotations


class MjlsError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(MjlsError, ValueError):
    """Shapes or mode counts of two objects do not agree."""


class InvalidPolicyError(MjlsError, ValueError):
    """A policy violates its invariants for the given MDP."""


class CardinalityError(MjlsError, ValueError):
    """An enumeration would exceed its configured cap."""


class MalformedProblemError(MjlsError, ValueError):
    """A conic problem violates the standard-form invariants."""


class SolverFailureError(MjlsError, RuntimeError):
    """The conic solver failed on a subproblem that a caller required."""


class SimulationDivergedError(MjlsError, RuntimeError):
    """A simulated state left the finite-arithmetic guard region."""

    def __init__(self, step: int, norm: float):
        super().__init__(f"state norm {norm:.3e} exceeded guard at step {step}")
        self.step = step
        self.norm = norm


class ModelFormatError(MjlsError, ValueError):
    """A model or result document failed structural validation."""

    def __init__(self, violations):
        self.violations = tuple(violations)
        super().__init__("; ".join(self.violations))
