"""Exception types shared across the engine.

Everything user-facing derives from CatchmapError so the CLI can map
failures to exit codes in one place.
"""
from __future__ import annotations


class CatchmapError(Exception):
    """Base class for all engine errors."""


class TopologyParseError(CatchmapError, ValueError):
    """A topology/oracle/scenario file could not be parsed; carries line context."""

    def __init__(self, message: str, line_no: int | None = None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class EdgeConflictError(CatchmapError, ValueError):
    """The same edge was declared twice with conflicting relationships."""


class PolicyError(CatchmapError, ValueError):
    """Routing policies (preferences / export rules) are missing or inconsistent."""


class DestinationSpecError(CatchmapError, ValueError):
    """A destination specification is malformed (duplicate neighbor, no ingress, ...)."""


class UnknownNodeError(CatchmapError, LookupError):
    """A referenced node or ingress point does not exist."""


class GenerationError(CatchmapError, ValueError):
    """Random-topology parameters are infeasible."""


class ConvergenceError(CatchmapError, RuntimeError):
    """Route propagation failed to reach a fixed point within the round budget."""


class CycleError(CatchmapError, ValueError):
    """A routing graph that must be acyclic contains a cycle (policy-model violation)."""


class CapacityError(CatchmapError, RuntimeError):
    """An exhaustive computation exceeds its size guard."""


class InputError(CatchmapError, ValueError):
    """Numerical input is out of its allowed domain (unnormalized, negative, ...)."""


class ContradictionError(CatchmapError, ValueError):
    """An observation conflicts with an already-certain route."""


class InfeasibleOracleError(CatchmapError, ValueError):
    """An observation has probability zero under the current model."""
