from typing import Optional


class GdpaSdrError(Exception):
    """Base class for all errors raised by this package"""


class DimensionError(GdpaSdrError, ValueError):
    """Shapes of the inputs do not match"""


class SignStructureError(GdpaSdrError, ValueError):
    """Dual variable z violates its block sign structure"""


class SizeCapError(GdpaSdrError, ValueError):
    """Problem is larger than an exhaustive/dense routine allows"""


class ConfigError(GdpaSdrError, ValueError):
    """Invalid environment configuration"""


class EigensolverError(GdpaSdrError):
    """The eigensolver received input it cannot work with"""


class LPError(GdpaSdrError):
    """The LP backend did not return an optimal solution"""

    def __init__(self, message: str, status: Optional[int] = None):
        super().__init__(message)
        self.status = status


class LPInfeasibleError(LPError):
    pass


class LPUnboundedError(LPError):
    pass


class DataFormatError(GdpaSdrError, ValueError):
    """A dataset file could not be parsed"""

    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
