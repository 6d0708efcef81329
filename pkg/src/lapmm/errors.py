"""Exception types raised by lapmm."""


class LapMMError(Exception):
    """Base class for all lapmm errors."""


class DimensionMismatch(LapMMError, ValueError):
    pass


class IndexOutOfRange(LapMMError, ValueError):
    pass


class NonpositiveWeight(LapMMError, ValueError):
    pass


class DuplicateEdge(LapMMError, ValueError):
    pass


class FactorTooSmall(LapMMError, ValueError):
    pass


class NonpositiveFloor(LapMMError, ValueError):
    pass


class AsymmetricInput(LapMMError, ValueError):
    pass


class NotSymmetric(LapMMError, ValueError):
    pass


class NegativeCostEntry(LapMMError, ValueError):
    pass


class InconsistentDimensions(LapMMError, ValueError):
    pass


class SingularSystem(LapMMError, ArithmeticError):
    pass


class SingularKKT(LapMMError, ArithmeticError):
    pass


class NoConvergence(LapMMError, RuntimeError):
    def __init__(self, max_iter, what="iteration"):
        super().__init__(f"{what} did not converge in {max_iter} iterations")
        self.max_iter = max_iter


class NoProgress(LapMMError, RuntimeError):
    pass


class InfeasibleStart(LapMMError, ValueError):
    pass


class BlockUpdateFailure(LapMMError, RuntimeError):
    def __init__(self, block, reason):
        super().__init__(f"block {block}: {reason}")
        self.block = block


class ConfigParse(LapMMError, ValueError):
    pass


class InstanceBuild(LapMMError, ValueError):
    pass
