"""Exception types shared across the package."""


class DomainError(ValueError):
    """Argument outside the domain of a scalar function."""


class InfeasibleError(RuntimeError):
    """The minimum offload demand exceeds the cloud capacity."""


class ConstraintViolation(ValueError):
    """An allocation breaks a structural invariant (e.g. bits sent in zero time)."""


class NumericalError(RuntimeError):
    """A bisection failed to bracket or a certificate check did not pass."""
