"""Adam optimizer over a named parameter set.

Moment estimates are kept per parameter tensor; the update applies, in
order: timestep increment, first/second biased moment updates, bias
correction, then theta -= alpha * m_hat / (sqrt(v_hat) + epsilon) with
epsilon added outside the square root.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamConfig:
    alpha: float = 0.001
    phi1: float = 0.9
    phi2: float = 0.999
    epsilon: float = 1e-8


@dataclass
class AdamState:
    alpha: float
    phi1: float
    phi2: float
    epsilon: float
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_init(params: dict, alpha: float = 0.001, phi1: float = 0.9,
              phi2: float = 0.999, epsilon: float = 1e-8) -> AdamState:
    """Zero-initialized moments shaped like the parameter set, t = 0."""
    if not (0.0 <= phi1 < 1.0) or not (0.0 <= phi2 < 1.0):
        raise ValueError(f"decay rates must lie in [0,1), got phi1={phi1}, phi2={phi2}")
    if alpha <= 0.0:
        raise ValueError(f"step size must be positive, got {alpha}")
    if epsilon <= 0.0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    state = AdamState(alpha=alpha, phi1=phi1, phi2=phi2, epsilon=epsilon)
    for name, p in params.items():
        state.m[name] = np.zeros_like(np.asarray(p, dtype=np.float64))
        state.v[name] = np.zeros_like(state.m[name])
    return state


def adam_step(state: AdamState, params: dict, grads: dict) -> dict:
    """One Adam update; returns the new parameter dict, mutates the state."""
    if set(grads) != set(params) or set(state.m) != set(params):
        raise ValueError("parameter, gradient and state names do not align")
    state.t += 1
    t = state.t
    c1 = 1.0 - state.phi1 ** t
    c2 = 1.0 - state.phi2 ** t
    new_params = {}
    for name, p in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != np.shape(p):
            raise ValueError(f"gradient shape {g.shape} does not match parameter "
                             f"{name!r} shape {np.shape(p)}")
        state.m[name] = state.phi1 * state.m[name] + (1.0 - state.phi1) * g
        state.v[name] = state.phi2 * state.v[name] + (1.0 - state.phi2) * (g * g)
        m_hat = state.m[name] / c1
        v_hat = state.v[name] / c2
        new_params[name] = p - state.alpha * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return new_params


def adam_converged(state: AdamState, params_delta: dict, tol: float = 1e-8) -> bool:
    """True once at least one step ran and the last update's max-norm < tol."""
    if tol <= 0.0:
        raise ValueError(f"tolerance must be positive, got {tol}")
    if state.t == 0:
        return False
    biggest = max((float(np.abs(d).max()) if np.size(d) else 0.0)
                  for d in params_delta.values())
    return biggest < tol
