"""Exception hierarchy shared by every bandlab module."""


class BandlabError(Exception):
    """Base class; the CLI maps these to exit code 3."""


class InvalidDimensions(BandlabError, ValueError):
    pass


class KernelViolation(BandlabError):
    pass


class ZetaTooLarge(BandlabError, ValueError):
    pass


class EdgePoint(BandlabError, ValueError):
    pass


class NonContraction(BandlabError):
    pass


class MaxIterations(BandlabError):
    pass


class SingularStability(BandlabError):
    pass


class SingularSolve(BandlabError):
    pass


class DegenerateInputs(BandlabError, ValueError):
    pass


class FlatProfile(BandlabError):
    pass


class EigensolveFailure(BandlabError):
    pass


class SingularMatrix(BandlabError):
    pass


class SingularMinor(BandlabError):
    pass


class InsufficientTrials(BandlabError):
    pass


class EstimatorNoise(BandlabError):
    pass


class CertificateFailure(BandlabError):
    """A numerical certificate (bound, identity, decay) did not hold."""


class ConfigError(ValueError):
    """Invalid run configuration; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
