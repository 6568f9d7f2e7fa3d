"""Exception types raised across the toolkit.

Numerical failures raise subclasses of :class:`FleetobsError` so callers
(and the CLI) can distinguish them from usage errors.
"""


class FleetobsError(Exception):
    """Base class for all toolkit errors."""


class DimensionMismatch(FleetobsError):
    """Matrix or channel dimensions are inconsistent."""


class SingularAtFrequency(FleetobsError):
    """A resolvent solve (jw*I - A) is singular at a grid frequency."""

    def __init__(self, omega, message=None):
        self.omega = omega
        super().__init__(message or f"resolvent singular at omega={omega} rad/s")


class AlgebraicLoop(FleetobsError):
    """A feedthrough loop matrix is singular; the interconnection is ill posed."""


class UnstableSystem(FleetobsError):
    """Operation requires an asymptotically stable system."""


class UnstableObserver(FleetobsError):
    """The assembled observer is not internally stable."""


class RankDeficientNominal(FleetobsError):
    """Nominal response loses column rank at a grid frequency."""

    def __init__(self, omega, message=None):
        self.omega = omega
        super().__init__(message or f"nominal response rank deficient at omega={omega} rad/s")


class SingularRatio(FleetobsError):
    """The nominal-to-member response ratio is singular at a grid frequency."""

    def __init__(self, omega, message=None):
        self.omega = omega
        super().__init__(message or f"response ratio singular at omega={omega} rad/s")


class GridMismatch(FleetobsError):
    """Frequency grids of the arguments differ."""


class NonPositiveEnvelope(FleetobsError):
    """Residual envelope is not strictly positive."""


class InfeasibleFit(FleetobsError):
    """No rational magnitude fit of the requested order satisfies the constraints."""


class ImaginaryAxisEigenvalue(FleetobsError):
    """The Riccati Hamiltonian has eigenvalues on the imaginary axis."""


class NoStabilizingSolution(FleetobsError):
    """The Riccati equation has no stabilizing solution."""


class InfeasibleAtGammaMax(FleetobsError):
    """H-infinity synthesis is infeasible even at the upper end of the gamma bracket."""


class RegularityFailure(FleetobsError):
    """A generalized plant violates a synthesis rank condition."""


class NonInvertibleScale(FleetobsError):
    """A scaling transfer function has zero feedthrough and cannot be inverted."""


class LineAboveNyquist(FleetobsError):
    """A requested excitation line sits at or above the Nyquist frequency."""


class RankDeficientExcitation(FleetobsError):
    """Experiments do not excite enough independent input directions."""


class LengthMismatch(FleetobsError):
    """Record lengths differ."""


class StageIncomplete(FleetobsError):
    """A pipeline stage was invoked before its upstream stages completed."""


class HashMismatch(FleetobsError):
    """Upstream pipeline inputs changed since the stage was last run."""
