"""
Error taxonomy for the Cross-conditioned Diffusion Model toolkit
Every error carries the process exit code the CLI reports for it
"""


class CDMError(Exception):
    """Base class for all toolkit errors"""

    exit_code = 1


class CDMValidationError(CDMError, ValueError):
    """Bad arguments, shape or geometry mismatches, invalid configuration"""

    exit_code = 2


class CDMIOError(CDMError, OSError):
    """Unreadable or unwritable paths"""

    exit_code = 1


class CorruptFileError(CDMIOError):
    """Case or checkpoint file failed magic, length or CRC validation"""


class PipelineOrderError(CDMError):
    """A stage ran before the stage it depends on"""

    exit_code = 3


class NonFiniteLossError(CDMError, ArithmeticError):
    """Training produced a NaN or infinite loss"""

    exit_code = 1

    def __init__(self, stage: str, epoch: int, step: int, value: float):
        self.stage = stage
        self.epoch = epoch
        self.step = step
        self.value = value
        super().__init__(
            f"Non-finite {stage} loss {value} at epoch {epoch}, step {step}"
        )
