"""Exception hierarchy.

Two families matter for the CLI exit contract: configuration problems
(exit code 2) and numerical failures (exit code 3). Everything else is a
bug and propagates as-is.
"""


class ManidestError(Exception):
    """Base class for all package errors."""


class ConfigError(ManidestError):
    """Invalid configuration, contract violation in inputs."""


class NumericalError(ManidestError):
    """A numerical procedure failed to meet its contract."""


# -- configuration / precondition errors ------------------------------------

class CoverGap(ConfigError):
    """Some probe point of the working ball is not covered by any ball."""


class DimError(ConfigError):
    """Incompatible intrinsic/ambient dimensions."""


class EmptySample(ConfigError):
    """A sample-driven operation received no effective observations."""


class SizeMismatch(ConfigError):
    """Paired inputs have incompatible sizes."""


class MassMismatch(ConfigError):
    """Discrete measures have unequal total mass."""


class SizeLimit(ConfigError):
    """Instance exceeds the exact-solver size limit."""


class TooFewSamples(ConfigError):
    """Not enough samples for the requested operation."""


class GridEmpty(ConfigError):
    """An adaptation grid is empty."""


class DomainError(ConfigError):
    """Points fall outside the declared domain box."""


class MissingDerivatives(ConfigError):
    """Discriminator lacks the derivative oracle an operation requires."""


class IoError(ConfigError):
    """File emission failed."""


# -- numerical failures ------------------------------------------------------

class RejectionStall(NumericalError):
    """A mixture component accepted nothing over the retry budget."""


class PackingFail(NumericalError):
    """Randomized packing search could not certify the size bound."""

    def __init__(self, msg, achieved=None):
        super().__init__(msg)
        self.achieved = achieved


class AmplitudeError(NumericalError):
    """Perturbation amplitude makes a density negative."""


class SingularMoments(NumericalError):
    """Moment system for the kernel construction is numerically singular."""


class IllPosed(NumericalError):
    """Chart fit has more parameters than samples."""


class QuadratureFail(NumericalError):
    """Coefficient quadrature did not converge to tolerance."""


class DegenerateFit(NumericalError):
    """Slope regression on degenerate abscissae."""
