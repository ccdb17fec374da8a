"""Exception types shared across the engine."""


class FoasimError(Exception):
    """Base class for all engine errors."""


class EmptyInput(FoasimError):
    pass


class InvalidRotation(FoasimError):
    pass


class SampleRateMismatch(FoasimError):
    pass


class InvalidHrirSet(FoasimError):
    pass


class EmptyDepthMap(FoasimError):
    pass


class ManifestSyntax(FoasimError):
    pass


class ManifestInvalid(FoasimError):
    """Raised with the full list of invariant violations."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class OutOfRange(FoasimError):
    pass


class DegenerateRay(FoasimError):
    pass


class UnsupportedOrder(FoasimError):
    pass


class InvalidGeometry(FoasimError):
    pass


class ShapeMismatch(FoasimError):
    pass


class NumericalDivergence(FoasimError):
    pass


class UndefinedMetric(FoasimError):
    pass


class NoActivity(FoasimError):
    pass


class CheckpointError(FoasimError):
    pass
