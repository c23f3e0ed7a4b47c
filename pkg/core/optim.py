"""
EAGLE update rule, reference Adam and SGD with momentum.

All rules work elementwise on flat float64 parameter vectors. The EAGLE
branch is a per-scalar secant step

    theta_next = theta - (theta - theta_prev) / (g - g_prev) * g

and a scalar falls back to Adam when either switching condition fires:

    condition1: |g - g_prev| < threshold
    condition2: g_prev * g >= 0  and  g * (g - g_prev) >= 0
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Tuple, Union, Optional, NamedTuple

import numpy as np

from config.experiment_config import EagleConfig, MomentumConfig
from utils.run_guard import check_same_length


logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]


class Rule(str, Enum):
    ADAM = "adam"
    EAGLE = "eagle"


@dataclass(frozen=True)
class RuleChoice:
    rule: Rule
    cond1_fired: bool
    cond2_fired: bool


@dataclass
class OptimizerState:
    """Per-scalar history shared by the EAGLE and Adam rules"""
    step: int
    param_prev: np.ndarray
    grad_prev: np.ndarray
    m: np.ndarray
    v: np.ndarray

    @classmethod
    def initial(cls, params: np.ndarray) -> "OptimizerState":
        """Step 0: previous parameter is theta_0, previous gradient and moments are 0"""
        params = np.asarray(params, dtype=np.float64)
        return cls(
            step=0,
            param_prev=params.copy(),
            grad_prev=np.zeros_like(params),
            m=np.zeros_like(params),
            v=np.zeros_like(params)
        )

    def __len__(self) -> int:
        return len(self.param_prev)

    def copy(self) -> "OptimizerState":
        return OptimizerState(
            step=self.step,
            param_prev=self.param_prev.copy(),
            grad_prev=self.grad_prev.copy(),
            m=self.m.copy(),
            v=self.v.copy()
        )


@dataclass
class MomentumState:
    velocity: np.ndarray
    mu: float = 0.9
    lr: float = 0.01

    @classmethod
    def initial(cls, n_params: int, config: MomentumConfig) -> "MomentumState":
        return cls(velocity=np.zeros(n_params, dtype=np.float64), mu=config.mu, lr=config.lr)


class StepResult(NamedTuple):
    params: np.ndarray
    eagle_count: int


class SecantStats(NamedTuple):
    """Largest |secant step| of one update and the |g - g_prev| behind it"""
    delta: float = 0.0
    grad_diff: float = float("nan")


# -- scalar / elementwise rules ------------------------------------------------

def eagle_delta(param_curr: ArrayLike, param_prev: ArrayLike,
                grad_curr: ArrayLike, grad_prev: ArrayLike) -> ArrayLike:
    """Secant step (d_theta / d_grad) * grad; the caller subtracts it.

    Callers must route through the switching conditions first so that
    grad_curr != grad_prev.
    """
    assert np.all(np.asarray(grad_curr) != np.asarray(grad_prev)), "eagle_delta called with zero gradient change"
    return (param_curr - param_prev) / (grad_curr - grad_prev) * grad_curr


def adam_delta(state: OptimizerState, grad_curr: np.ndarray, config: EagleConfig) -> np.ndarray:
    """Update the moments in `state` and return the bias-corrected Adam step.

    `state.step` must already hold the 1-based index of this update.
    """
    if state.step < 1:
        raise ValueError("adam_delta needs state.step >= 1 (increment before calling)")

    g = np.asarray(grad_curr, dtype=np.float64)
    state.m = config.beta1 * state.m + (1.0 - config.beta1) * g
    state.v = config.beta2 * state.v + (1.0 - config.beta2) * (g * g)

    m_hat = state.m / (1.0 - config.beta1 ** state.step)
    v_hat = state.v / (1.0 - config.beta2 ** state.step)
    return config.alpha * m_hat / (np.sqrt(v_hat) + config.epsilon)


def switch_conditions(grad_prev: ArrayLike, grad_curr: ArrayLike, threshold: float,
                      grad_guard: bool = True) -> Tuple[np.ndarray, np.ndarray]:
    """Elementwise (condition1, condition2) masks.

    grad_guard=False disables condition1 entirely; only tests use it.
    """
    grad_prev = np.asarray(grad_prev, dtype=np.float64)
    grad_curr = np.asarray(grad_curr, dtype=np.float64)
    grad_diff = grad_curr - grad_prev

    if grad_guard:
        cond1 = np.abs(grad_diff) < threshold
    else:
        cond1 = np.zeros(np.shape(grad_diff), dtype=bool)

    cond2 = (grad_prev * grad_curr >= 0) & (grad_curr * grad_diff >= 0)
    return cond1, cond2


def select_rule(grad_prev: float, grad_curr: float, threshold: float) -> RuleChoice:
    """Pick the update rule for one scalar parameter"""
    cond1, cond2 = switch_conditions(grad_prev, grad_curr, threshold)
    cond1, cond2 = bool(cond1), bool(cond2)
    return RuleChoice(
        rule=Rule.ADAM if (cond1 or cond2) else Rule.EAGLE,
        cond1_fired=cond1,
        cond2_fired=cond2
    )


def _eagle_update(state: OptimizerState, params: np.ndarray, grads: np.ndarray,
                  config: EagleConfig, grad_guard: bool) -> Tuple[np.ndarray, int, SecantStats]:
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    check_same_length(params=params, grads=grads, param_prev=state.param_prev,
                      grad_prev=state.grad_prev, m=state.m, v=state.v)

    state.step += 1
    # moments are refreshed for every scalar, whichever branch it takes
    delta = adam_delta(state, grads, config)

    cond1, cond2 = switch_conditions(state.grad_prev, grads, config.threshold, grad_guard)
    use_eagle = ~(cond1 | cond2)

    stats = SecantStats()
    if use_eagle.any():
        delta = delta.copy()
        secant = eagle_delta(
            params[use_eagle], state.param_prev[use_eagle],
            grads[use_eagle], state.grad_prev[use_eagle]
        )
        delta[use_eagle] = secant

        k = int(np.argmax(np.abs(secant)))
        largest = float(abs(secant[k]))
        largest_diff = float(abs(grads[use_eagle][k] - state.grad_prev[use_eagle][k]))
        stats = SecantStats(largest, largest_diff)
        if logger.isEnabledFor(logging.DEBUG):
            index = int(np.flatnonzero(use_eagle)[k])
            logger.debug(
                f"step {state.step}: largest secant step {largest:.6g} at scalar {index} "
                f"(|dg|={largest_diff:.3g}, |dtheta|={abs(params[index] - state.param_prev[index]):.3g})"
            )

    new_params = params - delta

    state.param_prev = params.copy()
    state.grad_prev = grads.copy()

    return new_params, int(np.count_nonzero(use_eagle)), stats


def eagle_step(state: OptimizerState, params: np.ndarray, grads: np.ndarray,
               config: EagleConfig, grad_guard: bool = True) -> Tuple[np.ndarray, int]:
    """One EAGLE optimizer update; returns (new params, scalars that took the EAGLE branch)"""
    new_params, count, _ = _eagle_update(state, params, grads, config, grad_guard)
    return new_params, count


def adam_step(state: OptimizerState, params: np.ndarray, grads: np.ndarray,
              config: EagleConfig) -> np.ndarray:
    """Plain Adam update sharing the EAGLE state layout"""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    check_same_length(params=params, grads=grads, m=state.m, v=state.v)

    state.step += 1
    new_params = params - adam_delta(state, grads, config)

    state.param_prev = params.copy()
    state.grad_prev = grads.copy()
    return new_params


def sgd_momentum_step(state: MomentumState, params: np.ndarray, grads: np.ndarray) -> np.ndarray:
    """v <- mu v + g; theta <- theta - lr v (velocity mutated in place)"""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    check_same_length(params=params, grads=grads, velocity=state.velocity)

    state.velocity *= state.mu
    state.velocity += grads
    return params - state.lr * state.velocity


# -- stateful optimizers -------------------------------------------------------

class EagleOptimizer:
    """EAGLE rule with the Adam fallback, holding its own state"""

    name = "eagle"

    def __init__(self, config: Optional[EagleConfig] = None, grad_guard: bool = True):
        self.config = config or EagleConfig()
        self.grad_guard = grad_guard
        self.state: Optional[OptimizerState] = None
        self.last_secant = SecantStats()

        self.logger = logging.getLogger(__name__)
        if not grad_guard:
            self.logger.warning("Gradient-difference guard disabled; EAGLE steps may diverge")

    def step(self, params: np.ndarray, grads: np.ndarray) -> StepResult:
        if self.state is None:
            self.state = OptimizerState.initial(params)
        new_params, count, self.last_secant = _eagle_update(
            self.state, params, grads, self.config, self.grad_guard
        )
        return StepResult(new_params, count)

    def state_dict(self) -> Dict[str, object]:
        if self.state is None:
            return {"step": 0}
        return {
            "step": self.state.step,
            "param_prev": self.state.param_prev.copy(),
            "grad_prev": self.state.grad_prev.copy(),
            "m": self.state.m.copy(),
            "v": self.state.v.copy()
        }

    def load_state_dict(self, payload: Dict[str, object]):
        if payload.get("step", 0) == 0 and "m" not in payload:
            self.state = None
            return
        self.state = OptimizerState(
            step=int(payload["step"]),
            param_prev=np.array(payload["param_prev"], dtype=np.float64),
            grad_prev=np.array(payload["grad_prev"], dtype=np.float64),
            m=np.array(payload["m"], dtype=np.float64),
            v=np.array(payload["v"], dtype=np.float64)
        )


class AdamOptimizer(EagleOptimizer):
    """Standalone reference Adam"""

    name = "adam"

    def __init__(self, config: Optional[EagleConfig] = None):
        super().__init__(config)

    def step(self, params: np.ndarray, grads: np.ndarray) -> StepResult:
        if self.state is None:
            self.state = OptimizerState.initial(params)
        return StepResult(adam_step(self.state, params, grads, self.config), 0)


class SgdMomentum:
    """SGD with Polyak momentum"""

    name = "sgd_momentum"

    def __init__(self, config: Optional[MomentumConfig] = None):
        self.config = config or MomentumConfig()
        self.state: Optional[MomentumState] = None

        self.logger = logging.getLogger(__name__)

    def step(self, params: np.ndarray, grads: np.ndarray) -> StepResult:
        if self.state is None:
            self.state = MomentumState.initial(len(params), self.config)
        return StepResult(sgd_momentum_step(self.state, params, grads), 0)

    def state_dict(self) -> Dict[str, object]:
        if self.state is None:
            return {}
        return {"velocity": self.state.velocity.copy(), "mu": self.state.mu, "lr": self.state.lr}

    def load_state_dict(self, payload: Dict[str, object]):
        if not payload:
            self.state = None
            return
        self.state = MomentumState(
            velocity=np.array(payload["velocity"], dtype=np.float64),
            mu=float(payload["mu"]),
            lr=float(payload["lr"])
        )


def build_optimizer(name: str, eagle_config: Optional[EagleConfig] = None,
                    momentum_config: Optional[MomentumConfig] = None,
                    grad_guard: bool = True):
    """Factory used by the benchmark harness"""
    if name == "eagle":
        return EagleOptimizer(eagle_config, grad_guard=grad_guard)
    if name == "adam":
        return AdamOptimizer(eagle_config)
    if name == "sgd_momentum":
        return SgdMomentum(momentum_config)
    raise ValueError(f"unknown optimizer '{name}'")
