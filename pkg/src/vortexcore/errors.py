"""Exception hierarchy. Every error carries a machine-readable ``code``."""


class VortexCoreError(Exception):
    code = "INTERNAL"

    def __init__(self, message, code=None, **details):
        super().__init__(message)
        if code is not None:
            self.code = code
        self.details = details

    def to_dict(self):
        return {"code": self.code, "message": str(self), "details": self.details}


class GeometryError(VortexCoreError):
    code = "DEGENERATE_SHAPE"


class DomainError(VortexCoreError):
    """A point lies outside the domain or on a singular diagonal."""

    code = "OUTSIDE_DOMAIN"


class FluxError(VortexCoreError):
    code = "FLUX_NONZERO"


class LaplaceSolveError(VortexCoreError):
    code = "LAPLACE_NONCONVERGENCE"


class ProfileError(VortexCoreError):
    code = "NO_ZERO_CROSSING"


class AdmissibilityError(VortexCoreError):
    code = "NOT_ADMISSIBLE"


class CriticalPointError(VortexCoreError):
    code = "NONCONVERGENCE"


class ParameterError(VortexCoreError):
    code = "BRACKET_SIGN"


class SolveError(VortexCoreError):
    code = "NONCONVERGENCE"


class CoreError(VortexCoreError):
    code = "NO_CORES"


class ConfigError(VortexCoreError):
    code = "CONFIG_INVALID"
