from typing import Iterable, List, Optional


class NetSynthError(Exception):
    """Base class for all netsynth errors"""


class FormatError(NetSynthError):
    """A dataset, config or report file is missing or malformed"""


class ValidationError(NetSynthError):
    """Data violates the schema or a sample invariant.

    Carries every violation found, not only the first one.
    """

    def __init__(self, violations: Iterable[str], context: Optional[str] = None):
        self.violations: List[str] = list(violations)
        self.context = context
        prefix = f"{context}: " if context else ""
        super().__init__(prefix + "; ".join(self.violations))


class ContractError(NetSynthError):
    """An operation was called outside its precondition"""


class CheckpointError(NetSynthError):
    """Checkpoint version or schema hash does not match"""


class TrainingDivergedError(NetSynthError):
    """Losses stayed non-finite for too many consecutive steps"""

    def __init__(self, message: str, step: int):
        self.step = step
        super().__init__(message)
