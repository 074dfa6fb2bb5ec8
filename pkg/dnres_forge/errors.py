from typing import Any, Optional


class ForgeError(Exception):
    """Base class for every error raised by dnres_forge."""


class ShapeError(ForgeError, ValueError):
    def __init__(self, dimension: str, expected: Any, actual: Any, where: str = ""):
        self.dimension = dimension
        self.expected = expected
        self.actual = actual
        prefix = f"{where}: " if where else ""
        super().__init__(
            f"{prefix}{dimension} mismatch: expected {expected}, got {actual}"
        )


class TopologyError(ForgeError, ValueError):
    pass


class NoiseParameterError(ForgeError, ValueError):
    pass


class ImageFormatError(ForgeError, IOError):
    pass


class CheckpointError(ForgeError, IOError):
    pass


class DivergenceError(ForgeError, ArithmeticError):
    def __init__(
        self, message: str, stage: Optional[int] = None, epoch: Optional[int] = None
    ):
        self.stage = stage
        self.epoch = epoch
        context = []
        if stage is not None:
            context.append(f"stage {stage}")
        if epoch is not None:
            context.append(f"epoch {epoch}")
        suffix = f" ({', '.join(context)})" if context else ""
        super().__init__(f"{message}{suffix}")
