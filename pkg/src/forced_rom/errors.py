"""Exception hierarchy shared by every module in the package."""


class ForcedRomError(Exception):
    """Base class for all package errors."""


class ShapeError(ForcedRomError, ValueError):
    pass


class RankDeficient(ForcedRomError, ValueError):
    def __init__(self, rank, needed):
        self.rank = rank
        self.needed = needed
        super().__init__(f"design matrix is rank deficient: numerical rank {rank} < {needed}")


class InvalidRank(ForcedRomError, ValueError):
    pass


class ConvergenceFailure(ForcedRomError, RuntimeError):
    pass


class GraphError(ForcedRomError, RuntimeError):
    pass


class NonFiniteGradient(ForcedRomError, FloatingPointError):
    pass


class InvalidParam(ForcedRomError, ValueError):
    pass


class CflError(InvalidParam):
    def __init__(self, factor, limit=0.9):
        self.factor = factor
        super().__init__(f"CFL factor {factor:.4g} exceeds {limit}")


class EmptySplit(ForcedRomError, ValueError):
    pass


class MissingVariable(ForcedRomError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "missing variable"


class UnsupportedPropagator(ForcedRomError, TypeError):
    pass


class TrainingDiverged(ForcedRomError, RuntimeError):
    def __init__(self, epoch, message="non-finite loss"):
        self.epoch = epoch
        super().__init__(f"training diverged at epoch {epoch}: {message}")


class DegenerateVariance(ForcedRomError, ValueError):
    pass


class ConfigError(ForcedRomError, ValueError):
    def __init__(self, message, path=None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class DuplicateName(ConfigError):
    pass


class DegenerateSpectrum(UserWarning):
    """Penalized eigenvalue is (nearly) repeated; gradient falls back to finite differences."""
