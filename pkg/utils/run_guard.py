import math
import logging
from typing import Optional, Dict, Any

from pydantic import ValidationError


class EagleError(Exception):
    """Base class for every failure raised by the benchmark stack"""


class ConfigError(EagleError):
    """Invalid experiment configuration or flag override"""

    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(message)
        self.field = field


class DataFormatError(EagleError):
    """Malformed dataset file"""

    def __init__(self, message: str, path: Optional[str] = None, line_number: Optional[int] = None):
        location = f"{path}:{line_number}: " if path and line_number else ""
        super().__init__(f"{location}{message}")
        self.path = path
        self.line_number = line_number


class ShapeMismatchError(EagleError, ValueError):
    """Vector or matrix lengths that must agree do not"""


class CheckpointError(EagleError):
    """Checkpoint file is unreadable or does not match the network"""


class RunDiverged(EagleError):
    """Raised when a run produced a non-finite loss"""

    def __init__(self, epoch: int, loss: float):
        super().__init__(f"loss became non-finite ({loss}) at epoch {epoch}")
        self.epoch = epoch
        self.loss = loss


def check_same_length(**vectors) -> int:
    """Return the common length of the given vectors or raise ShapeMismatchError"""
    lengths = {name: len(vec) for name, vec in vectors.items()}
    if len(set(lengths.values())) > 1:
        detail = ", ".join(f"{name}={n}" for name, n in lengths.items())
        raise ShapeMismatchError(f"length mismatch: {detail}")
    return next(iter(lengths.values()), 0)


class DivergenceBreaker:
    """Trips once a run reports a non-finite loss.

    States: OK, DIVERGED. Once DIVERGED it stays there; the caller halts the
    run and keeps the record.
    """

    def __init__(self):
        self.state = 'OK'
        self.diverged_at: Optional[int] = None
        self.last_loss: Optional[float] = None

        self.logger = logging.getLogger(__name__)

    @property
    def tripped(self) -> bool:
        return self.state == 'DIVERGED'

    def record(self, loss: float, epoch: int) -> bool:
        """Feed one loss value; returns True if the breaker is (now) tripped"""
        if self.tripped:
            return True

        self.last_loss = loss
        if not math.isfinite(loss):
            self.state = 'DIVERGED'
            self.diverged_at = epoch
            self.logger.warning(f"Run DIVERGED at epoch {epoch}: loss={loss}")

        return self.tripped


class ErrorRecovery:
    """Classify failures and map them onto the CLI exit-code contract"""

    EXIT_OK = 0
    EXIT_CONFIG = 1
    EXIT_DIVERGED = 2

    def __init__(self):
        self.logger = logging.getLogger(__name__)

    def classify_error(self, error: Exception) -> str:
        """Classify error type for the exit-code mapping"""
        if isinstance(error, RunDiverged):
            return 'diverged'
        if isinstance(error, (ConfigError, ValidationError)):
            return 'config_error'
        if isinstance(error, DataFormatError):
            return 'data_error'
        if isinstance(error, CheckpointError):
            return 'checkpoint_error'
        if isinstance(error, ShapeMismatchError):
            return 'shape_error'
        if isinstance(error, (FileNotFoundError, PermissionError)):
            return 'data_error'

        return 'unknown'

    def suggest_recovery_action(self, error_category: str) -> Dict[str, Any]:
        """Exit code and a one-line suggestion per error category"""
        recovery_actions = {
            'config_error': {
                'exit_code': self.EXIT_CONFIG,
                'suggestion': 'Fix the named field in the config file or flag overrides'
            },
            'data_error': {
                'exit_code': self.EXIT_CONFIG,
                'suggestion': 'Check the dataset path and the CSV schema'
            },
            'checkpoint_error': {
                'exit_code': self.EXIT_CONFIG,
                'suggestion': 'Use a checkpoint written for the configured architecture'
            },
            'shape_error': {
                'exit_code': self.EXIT_CONFIG,
                'suggestion': 'Architecture and data dimensions disagree'
            },
            'diverged': {
                'exit_code': self.EXIT_DIVERGED,
                'suggestion': 'Raise the gradient-difference threshold or lower alpha'
            },
            'unknown': {
                'exit_code': self.EXIT_CONFIG,
                'suggestion': 'Manual investigation required'
            }
        }

        return recovery_actions.get(error_category, recovery_actions['unknown'])

    def describe(self, error: Exception) -> str:
        """One-line diagnosis suitable for stderr"""
        if isinstance(error, ValidationError):
            first = error.errors()[0]
            field = ".".join(str(part) for part in first.get('loc', ())) or 'config'
            return f"invalid config field '{field}': {first.get('msg', str(error))}"
        if isinstance(error, ConfigError) and error.field:
            return f"invalid config field '{error.field}': {error}"
        return f"{type(error).__name__}: {error}"

    def log_detailed_error(self, error: Exception, context: dict = None) -> Dict[str, Any]:
        """Log the error with its category and return the recovery record"""
        error_category = self.classify_error(error)
        recovery_action = self.suggest_recovery_action(error_category)

        self.logger.error(f"Error Category: {error_category}")
        self.logger.error(f"Error Message: {self.describe(error)}")
        self.logger.error(f"Recovery Suggestion: {recovery_action['suggestion']}")

        if context:
            self.logger.error(f"Context: {context}")

        return {
            'category': error_category,
            'recovery_action': recovery_action,
            'error_message': self.describe(error),
            'exit_code': recovery_action['exit_code']
        }
