"""Exception hierarchy shared by every stage of the pipeline."""


class EchoSonarError(Exception):
    """Base class for all package errors."""


class ConfigError(EchoSonarError, ValueError):
    """Invalid parameters, scene description or config file."""


class ShapeError(EchoSonarError, ValueError):
    """Array shapes that do not match the operation's contract."""


class InputError(EchoSonarError, ValueError):
    """Input data that is structurally valid but unusable (too short, unlabeled...)."""


class AnchorError(EchoSonarError):
    """No direct-path peak could be established on a channel."""

    def __init__(self, channel: int, message: str):
        super().__init__(f"channel {channel}: {message}")
        self.channel = channel


class NumericError(EchoSonarError, FloatingPointError):
    """Non-finite values appeared inside the network or the optimizer."""


class DivergenceError(NumericError):
    """Training loss blew up; carries the stage and step where it happened."""

    def __init__(self, stage: str, step: int, loss: float):
        super().__init__(f"training diverged in stage {stage!r} at step {step} (loss={loss!r})")
        self.stage = stage
        self.step = step
        self.loss = loss


class NormalizationError(EchoSonarError, ValueError):
    """Palm triangle too degenerate to build a canonical frame."""


class AngleError(EchoSonarError, ValueError):
    """A bone is too short for its direction to be meaningful."""

    def __init__(self, bone: str, length_mm: float):
        super().__init__(f"bone {bone} is degenerate ({length_mm:.4f} mm)")
        self.bone = bone


class FormatError(EchoSonarError, ValueError):
    """A file does not follow the expected binary or text layout."""
