#!/usr/bin/env python3
"""
Embedded example suite behind `eagle_cli.py selftest`.

Hand-computed secant steps on L = (theta - 2)^2 + 2, the five gradient
transition patterns and their effectiveness, the first-step rule and the
Adam bias correction at n = 1.
"""

import math
import time
import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np

from config.experiment_config import EagleConfig
from core.data import quadratic
from core.optim import (
    AdamOptimizer, EagleOptimizer, OptimizerState, Rule,
    adam_delta, eagle_delta, eagle_step, select_rule
)


logger = logging.getLogger(__name__)


# -- transition-pattern oracle -------------------------------------------------

EFFECTIVE_PATTERNS = {"1-1", "1-2", "1-3"}

TRANSITION_ROWS = [
    # (pattern, grad_prev, grad_curr, expected rule)
    ("1-1", 16.0, 12.0, Rule.EAGLE),
    ("1-2", -20.0, -10.0, Rule.EAGLE),
    ("1-3", -6.0, 6.0, Rule.EAGLE),
    ("2-1", 4.0, 10.0, Rule.ADAM),
    ("2-2", -4.0, -10.0, Rule.ADAM),
]


def transition_pattern(grad_prev: float, grad_curr: float) -> Optional[str]:
    """Which gradient transition a pair of consecutive gradients is, if any.

    1-1 large -> small positive, 1-2 large -> small negative, 1-3 sign change,
    2-1 small -> large positive, 2-2 small -> large negative. Pairs touching
    zero or with equal gradients match no pattern.
    """
    if grad_prev > 0 and grad_curr > 0:
        if grad_curr < grad_prev:
            return "1-1"
        return "2-1" if grad_curr > grad_prev else None
    if grad_prev < 0 and grad_curr < 0:
        if grad_curr > grad_prev:
            return "1-2"
        return "2-2" if grad_curr < grad_prev else None
    if grad_prev * grad_curr < 0:
        return "1-3"
    return None


def oracle_rule(grad_prev: float, grad_curr: float, threshold: float) -> Rule:
    """EAGLE exactly for effective patterns with a large enough gradient change"""
    pattern = transition_pattern(grad_prev, grad_curr)
    if pattern in EFFECTIVE_PATTERNS and abs(grad_curr - grad_prev) >= threshold:
        return Rule.EAGLE
    return Rule.ADAM


def signed_magnitude_grid() -> List[float]:
    magnitudes = [1e-4, 1e-3, 0.1, 1.0, 10.0]
    return [-m for m in reversed(magnitudes)] + [0.0] + magnitudes


# -- checks ----------------------------------------------------------------------

@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


def _secant_examples() -> Tuple[bool, str]:
    cases = [
        # theta_prev, theta, g_prev, g
        (10.0, 8.0, 16.0, 12.0),
        (-8.0, -3.0, -20.0, -10.0),
        (-1.0, 5.0, -6.0, 6.0),
    ]
    landed = [theta - eagle_delta(theta, theta_prev, g, g_prev) for theta_prev, theta, g_prev, g in cases]
    return all(x == 2.0 for x in landed), f"theta_next = {landed}"


def _transition_rows() -> Tuple[bool, str]:
    wrong = [
        pattern for pattern, g_prev, g_curr, expected in TRANSITION_ROWS
        if select_rule(g_prev, g_curr, 0.0005).rule is not expected
    ]
    return not wrong, f"mismatched rows: {wrong}" if wrong else "5/5 rows"


def _table_enumeration() -> Tuple[bool, str]:
    grid = signed_magnitude_grid()
    cases = [(gp, gc, t) for t in (0.0005, 0.01) for gp in grid for gc in grid]
    mismatches = sum(1 for gp, gc, t in cases if select_rule(gp, gc, t).rule is not oracle_rule(gp, gc, t))
    return mismatches == 0, f"{len(cases) - mismatches}/{len(cases)} cases agree"


def _first_step_rule() -> Tuple[bool, str]:
    rng = np.random.default_rng(7)
    config = EagleConfig()
    counts = []
    for _ in range(1000):
        grads = rng.normal(scale=10.0 ** rng.uniform(-6, 3), size=int(rng.integers(1, 64)))
        state = OptimizerState.initial(rng.normal(size=len(grads)))
        counts.append(eagle_step(state, state.param_prev.copy(), grads, config)[1])
    return max(counts) == 0, f"max usage on first step = {max(counts)}"


def _adam_first_step() -> Tuple[bool, str]:
    config = EagleConfig()
    state = OptimizerState.initial(np.zeros(1))
    state.step = 1
    delta = adam_delta(state, np.array([1.0]), config)[0]
    expected = 0.001 * 1.0 / (1.0 + 1e-8)
    return delta == expected, f"delta = {delta!r}"


def _worked_quadratic_step() -> Tuple[bool, str]:
    fn = quadratic(1.0, 2.0, 2.0)
    opt = EagleOptimizer()
    opt.state = OptimizerState.initial(np.array([10.0]))
    opt.state.grad_prev = fn.grad(np.array([10.0]))
    opt.state.step = 1
    theta = np.array([8.0])
    result = opt.step(theta, fn.grad(theta))
    return result.params[0] == 2.0 and result.eagle_count == 1, f"theta = {result.params[0]!r}"


def _quadratic_one_step() -> Tuple[bool, str]:
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(1000):
        a, c = rng.uniform(0.1, 10.0), rng.uniform(-10.0, 10.0)
        theta_prev, theta = rng.uniform(-10.0, 10.0, size=2)
        if abs(theta - theta_prev) < 1.0:
            continue
        fn = quadratic(a, c, rng.uniform(-10.0, 10.0))
        landed = theta - eagle_delta(theta, theta_prev, fn.grad(theta), fn.grad(theta_prev))
        worst = max(worst, abs(landed - c))
    return worst <= 1e-12, f"max |theta_next - c| = {worst:.3g}"


def _adam_equivalence() -> Tuple[bool, str]:
    rng = np.random.default_rng(3)
    params = rng.normal(size=32)
    eagle = EagleOptimizer(EagleConfig(threshold=math.inf))
    adam = AdamOptimizer()
    p_eagle, p_adam = params.copy(), params.copy()
    for _ in range(50):
        grads = rng.normal(size=32)
        p_eagle = eagle.step(p_eagle, grads).params
        p_adam = adam.step(p_adam, grads).params
    return bool(np.array_equal(p_eagle, p_adam)), "bitwise identical" if np.array_equal(p_eagle, p_adam) else "differs"


CHECKS: List[Tuple[str, Callable[[], Tuple[bool, str]]]] = [
    ("secant steps land on the minimum", _secant_examples),
    ("transition-pattern rows", _transition_rows),
    ("transition table enumeration", _table_enumeration),
    ("first step always uses Adam", _first_step_rule),
    ("Adam bias correction at n = 1", _adam_first_step),
    ("worked quadratic optimizer step", _worked_quadratic_step),
    ("random quadratics in one step", _quadratic_one_step),
    ("infinite threshold equals Adam", _adam_equivalence),
]


def run_selftest() -> Tuple[List[CheckResult], float]:
    """Run every check; exceptions count as failures"""
    started = time.perf_counter()
    results = []
    for name, check in CHECKS:
        try:
            passed, detail = check()
        except Exception as e:
            passed, detail = False, f"{type(e).__name__}: {e}"
        results.append(CheckResult(name, bool(passed), detail))
        logger.debug(f"selftest {name}: {'PASS' if passed else 'FAIL'} ({detail})")
    return results, time.perf_counter() - started
