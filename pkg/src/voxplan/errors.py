"""Exception hierarchy shared across the package."""


class VoxplanError(Exception):
    """Base class for all package errors."""


class InvalidInputError(VoxplanError):
    """An argument violates an operation precondition."""


class SetupError(VoxplanError):
    """Scene randomization could not satisfy the reset constraints."""


class PlanningInfeasibleError(VoxplanError):
    """No collision-free candidate trajectory or push action exists."""


class InfeasibleStartError(PlanningInfeasibleError):
    """The start voxel of a path query is itself in collision."""


class PerceptionFailure(VoxplanError):
    """A detection query needed by a program returned no instances."""


class GenerationError(VoxplanError):
    """The language-model endpoint failed to produce a usable program."""


class EndpointError(GenerationError):
    """Transport-level failure talking to the completions endpoint."""


class FixtureMissingError(GenerationError):
    """No canned program exists for the requested (kind, template)."""


class DivergenceError(VoxplanError):
    """A training step produced a non-finite loss."""


class ProgramError(VoxplanError):
    """Base class for constrained-language failures."""

    def __init__(self, message: str, line: int = 0, col: int = 0):
        super().__init__(message)
        self.line = line
        self.col = col

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        base = super().__str__()
        if self.line:
            return f"{base} (line {self.line}, col {self.col})"
        return base


class ParseError(ProgramError):
    """Source text does not conform to the grammar."""


class UnknownCallError(ProgramError):
    """A program invoked a function outside the whitelist."""


class UnboundedLoopError(ProgramError):
    """A program used a looping construct without a static bound."""


class StepBudgetExceeded(ProgramError):
    """Program evaluation exceeded the interpreter step budget."""


class ProgramTypeError(ProgramError):
    """A runtime value had the wrong type for an operation."""


class SandboxViolation(ProgramError):
    """A program attempted to mutate state outside its map set."""


class CompositionError(VoxplanError):
    """A composer run finished without producing an affordance map."""
