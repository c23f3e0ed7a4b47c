"""Error hierarchy, divergence breaker and the exit-code mapping."""

import math

import numpy as np
import pytest
from pydantic import ValidationError

from config.experiment_config import ExperimentConfig
from utils.run_guard import (
    CheckpointError, ConfigError, DataFormatError, DivergenceBreaker, EagleError,
    ErrorRecovery, RunDiverged, ShapeMismatchError, check_same_length
)


class TestErrors:

    def test_hierarchy(self):
        for cls in (ConfigError, DataFormatError, ShapeMismatchError, CheckpointError, RunDiverged):
            assert issubclass(cls, EagleError)
        assert issubclass(ShapeMismatchError, ValueError)

    def test_data_error_names_line(self):
        error = DataFormatError("bad cell", path="data.csv", line_number=12)
        assert str(error).startswith("data.csv:12: ")
        assert error.line_number == 12

    def test_run_diverged_carries_epoch(self):
        error = RunDiverged(7, math.inf)
        assert error.epoch == 7
        assert "epoch 7" in str(error)

    def test_check_same_length(self):
        assert check_same_length(a=np.zeros(3), b=np.ones(3)) == 3
        with pytest.raises(ShapeMismatchError, match="b=2"):
            check_same_length(a=np.zeros(3), b=np.ones(2))


class TestDivergenceBreaker:
    """OK -> DIVERGED on the first non-finite loss, and it stays there."""

    def test_finite_losses(self):
        breaker = DivergenceBreaker()
        assert not any(breaker.record(x, epoch) for epoch, x in enumerate([1.0, 0.5, 0.1], 1))
        assert breaker.state == 'OK'

    @pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
    def test_trips(self, bad):
        breaker = DivergenceBreaker()
        breaker.record(1.0, 1)
        assert breaker.record(bad, 2)
        assert breaker.tripped
        assert breaker.diverged_at == 2
        # stays tripped
        assert breaker.record(0.1, 3)
        assert breaker.diverged_at == 2


class TestErrorRecovery:
    """Categories map onto exit codes 0/1/2."""

    def _validation_error(self):
        with pytest.raises(ValidationError) as info:
            ExperimentConfig(epochs=0)
        return info.value

    @pytest.mark.parametrize("error, category, code", [
        (RunDiverged(3, math.nan), 'diverged', 2),
        (ConfigError("bad", field="epochs"), 'config_error', 1),
        (DataFormatError("bad"), 'data_error', 1),
        (FileNotFoundError("x"), 'data_error', 1),
        (CheckpointError("bad"), 'checkpoint_error', 1),
        (ShapeMismatchError("bad"), 'shape_error', 1),
        (RuntimeError("boom"), 'unknown', 1),
    ])
    def test_classification(self, error, category, code):
        recovery = ErrorRecovery()
        assert recovery.classify_error(error) == category
        assert recovery.suggest_recovery_action(category)['exit_code'] == code

    def test_validation_error_is_config_error(self):
        recovery = ErrorRecovery()
        error = self._validation_error()
        assert recovery.classify_error(error) == 'config_error'
        assert recovery.describe(error).startswith("invalid config field 'epochs'")

    def test_log_detailed_error(self, caplog):
        outcome = ErrorRecovery().log_detailed_error(ConfigError("bad value", field="seeds"), {"command": "train"})
        assert outcome['category'] == 'config_error'
        assert outcome['exit_code'] == 1
        assert "seeds" in outcome['error_message']
        assert "Recovery Suggestion" in caplog.text
