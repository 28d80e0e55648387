"""First-order optimizers: plain SGD for inner-loop adaptation, Adam for
meta-updates and baseline training. Both are functional: inputs are never
mutated, updates return fresh values."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .nnet import ParamVector


@dataclass(frozen=True)
class SgdConfig:
    learning_rate: float = 1e-3

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning rate must be > 0, got {self.learning_rate}")


@dataclass(frozen=True)
class AdamState:
    """Adam hyperparameters together with its per-parameter moment state."""

    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    first_moment: np.ndarray = None
    second_moment: np.ndarray = None
    step_count: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning rate must be > 0, got {self.learning_rate}")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if (self.first_moment is None) != (self.second_moment is None):
            raise ValueError("moment arrays must be provided together")
        if self.first_moment is not None:
            m = np.asarray(self.first_moment, dtype=np.float64)
            v = np.asarray(self.second_moment, dtype=np.float64)
            if m.shape != v.shape:
                raise ValueError("moment arrays must have equal shapes")
            if (v < 0).any():
                raise ValueError("second moment must be non-negative")
            object.__setattr__(self, "first_moment", m)
            object.__setattr__(self, "second_moment", v)
        if self.step_count < 0:
            raise ValueError("step_count must be >= 0")

    @classmethod
    def init(cls, n_params: int, learning_rate: float = 1e-4,
             beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8) -> "AdamState":
        if n_params < 1:
            raise ValueError(f"n_params must be >= 1, got {n_params}")
        return cls(
            learning_rate=learning_rate, beta1=beta1, beta2=beta2, epsilon=epsilon,
            first_moment=np.zeros(n_params), second_moment=np.zeros(n_params),
            step_count=0,
        )


def _check_lengths(params: ParamVector, gradient: ParamVector) -> None:
    if len(params) != len(gradient):
        raise ValueError(f"parameter length {len(params)} != gradient length {len(gradient)}")


def sgd_step(params: ParamVector, gradient: ParamVector, cfg: SgdConfig) -> ParamVector:
    """params - learning_rate * gradient."""
    _check_lengths(params, gradient)
    return ParamVector(params.values - cfg.learning_rate * gradient.values, params.spec)


def adam_step(state: AdamState, params: ParamVector,
              gradient: ParamVector) -> tuple[ParamVector, AdamState]:
    """One bias-corrected Adam update; returns (new params, advanced state)."""
    _check_lengths(params, gradient)
    if state.first_moment is None:
        state = replace(state, first_moment=np.zeros(len(params)),
                        second_moment=np.zeros(len(params)))
    if state.first_moment.size != len(params):
        raise ValueError(
            f"moment length {state.first_moment.size} != parameter length {len(params)}"
        )
    g = gradient.values
    t = state.step_count + 1
    m = state.beta1 * state.first_moment + (1.0 - state.beta1) * g
    v = state.beta2 * state.second_moment + (1.0 - state.beta2) * g * g
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new_values = params.values - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    new_state = replace(state, first_moment=m, second_moment=v, step_count=t)
    return ParamVector(new_values, params.spec), new_state
