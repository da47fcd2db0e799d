"""Exception types raised across the package."""


class FsMeanError(Exception):
    """Base class for all errors raised by fsmean."""


class AngleNearPi(FsMeanError):
    """Rotation angle too close to pi for the principal logarithm."""


class SingularInput(FsMeanError):
    pass


class NoConvergence(FsMeanError):
    pass


class DegenerateSpeed(FsMeanError):
    """Estimated speed vanished: the curve is not regular."""


class IllConditioned(FsMeanError):
    """Local polynomial design is numerically singular (bandwidth too small)."""


class FrameDegenerate(FsMeanError):
    def __init__(self, message, indices=()):
        super().__init__(message)
        self.indices = tuple(indices)


class RankDeficient(FsMeanError):
    pass


class FoldTooSmall(FsMeanError):
    pass


class GridMismatch(FsMeanError):
    pass
