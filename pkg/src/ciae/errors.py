"""Exception types raised across the package."""


class CIAEError(Exception):
    """Base class for every error raised by this package."""


class ZeroNorm(CIAEError, ValueError):
    """A vector that must be normalized has (near) zero length."""

    def __init__(self, message="vector norm below epsilon", pixel=None):
        if pixel is not None:
            message = f"{message} at pixel (y={pixel[0]}, x={pixel[1]})"
        super().__init__(message)
        self.pixel = pixel


class ShapeMismatch(CIAEError, ValueError):
    pass


class InfeasibleConfig(CIAEError, ValueError):
    pass


class FormatError(CIAEError, ValueError):
    """A file on disk does not follow the expected layout."""


class NoValidPixels(CIAEError, ValueError):
    pass


class DivergedLoss(CIAEError, RuntimeError):
    pass


class MissingScene(CIAEError, ValueError):
    pass


class MergedBank(CIAEError, ValueError):
    """The memory bank holds a single merged thing slot, not one per category."""


class ConfigError(CIAEError, ValueError):
    pass
