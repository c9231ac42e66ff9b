"""Exception types shared across the package."""


class KmeLabError(Exception):
    """Base class for all package errors."""


class ArgumentError(KmeLabError, ValueError):
    """An argument lies outside the documented domain."""


class IntegrationError(KmeLabError):
    """Adaptive quadrature did not reach the requested tolerance."""

    def __init__(self, message, error_estimate):
        super().__init__(f"{message} (achieved error estimate {error_estimate:.3e})")
        self.error_estimate = float(error_estimate)


class PreconditionError(KmeLabError):
    """A mathematical hypothesis required by an operation does not hold."""

    def __init__(self, condition, detail=""):
        msg = condition if not detail else f"{condition}: {detail}"
        super().__init__(msg)
        self.condition = condition


class UnsupportedCaseError(KmeLabError):
    """Inputs fall outside the cases covered by the closed forms."""


class InternalConsistencyError(KmeLabError):
    """A computed quantity violates an identity it must satisfy."""


class ConstructionError(KmeLabError):
    """A certified construction (packing, search) could not be completed."""

    def __init__(self, message, achieved=None):
        super().__init__(message if achieved is None else f"{message} (achieved {achieved})")
        self.achieved = achieved


class ReplicateError(KmeLabError):
    """A Monte Carlo replicate failed; carries its coordinates."""

    def __init__(self, n, replicate, cause):
        super().__init__(f"replicate failed at n={n}, replicate={replicate}: {cause}")
        self.n = n
        self.replicate = replicate
