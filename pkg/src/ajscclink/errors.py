"""Exception types shared across the simulator."""


class ConfigError(ValueError):
    """Invalid configuration: bad parameter values, ranges, or files."""


class DemodError(RuntimeError):
    """Receiver could not recover a frequency peak from a block."""


class StageError(RuntimeError):
    """A pipeline stage failed; message carries the stage name and context."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"stage '{stage}': {message}")
        self.stage = stage
