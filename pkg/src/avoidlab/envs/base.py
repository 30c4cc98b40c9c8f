"""Avoid-environment interface and single-instance step/reset operations.

An avoid environment is a parameterized deterministic system: a parameter
vector theta selects the initial state, the dynamics, and the safety margin
``h``.  A state is unsafe exactly when ``h > 0``.  Episodes end at the first
unsafe state or at the truncation horizon.

Environments implement *batched* primitives (``initial_state``,
``step_dynamics``, ``safety_margin`` over rows) so rollout collection can
run many instances in lockstep; the scalar ``reset``/``step`` wrappers below
give the one-instance view.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from avoidlab.errors import ContractViolation


@dataclass(frozen=True)
class Discrete:
    n: int

    def contains(self, action):
        a = int(action)
        return 0 <= a < self.n


@dataclass(frozen=True)
class Box:
    lo: np.ndarray
    hi: np.ndarray

    @property
    def dim(self):
        return len(self.lo)

    def contains(self, action):
        a = np.asarray(action, dtype=float)
        return a.shape == self.lo.shape and np.all(a >= self.lo) and np.all(a <= self.hi)


@dataclass(frozen=True)
class ParameterVector:
    """A point theta in the box-bounded parameter space."""

    theta: np.ndarray
    bounds: np.ndarray  # (k, 2) rows of [lo, hi]

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        bounds = np.asarray(self.bounds, dtype=float)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "bounds", bounds)
        if theta.shape != (bounds.shape[0],):
            raise ContractViolation(
                f"theta shape {theta.shape} does not match bounds {bounds.shape}"
            )
        if np.any(theta < bounds[:, 0]) or np.any(theta > bounds[:, 1]):
            raise ContractViolation(f"theta {theta} outside bounds")


@dataclass
class EnvState:
    """State snapshot: raw state ``x``, step index ``k``, and theta."""

    x: np.ndarray
    k: int
    theta: np.ndarray


@dataclass
class StepOutcome:
    state: EnvState
    h_value: float
    unsafe: bool
    truncated: bool


class AvoidEnvironment(ABC):
    """Bundle of s0(theta), dynamics, safety margin, base sampler, bounds."""

    param_bounds: np.ndarray  # (k, 2)
    horizon: int
    action_space: Discrete | Box

    @property
    def param_dim(self):
        return self.param_bounds.shape[0]

    @property
    @abstractmethod
    def state_dim(self):
        ...

    @property
    def obs_dim(self):
        return self.state_dim + self.param_dim

    @abstractmethod
    def sample_params(self, rng, n):
        """Draw n parameters from the base distribution p(theta); (n, k)."""

    @abstractmethod
    def initial_state(self, thetas):
        """s0 applied rowwise; (n, k) -> (n, d).  Deterministic in theta."""

    @abstractmethod
    def step_dynamics(self, states, thetas, actions):
        """One deterministic transition per row; returns next states."""

    @abstractmethod
    def safety_margin(self, states, thetas):
        """h(x) per row; the state is unsafe iff the margin is > 0."""

    def terminal_safe(self, states, thetas):
        """Rows that reached an absorbing safe terminal (default: none)."""
        return np.zeros(len(states), dtype=bool)

    def observe(self, states, thetas):
        """Observation rows: normalized concatenation of state and theta."""
        raw = np.concatenate([states, thetas], axis=1)
        scaled = (raw - self._obs_offset()) / self._obs_scale()
        return np.clip(scaled, -5.0, 5.0)

    def _obs_offset(self):
        return 0.0

    def _obs_scale(self):
        return 1.0

    def param_in_bounds(self, theta):
        theta = np.asarray(theta, dtype=float)
        return (
            theta.shape == (self.param_dim,)
            and np.all(theta >= self.param_bounds[:, 0])
            and np.all(theta <= self.param_bounds[:, 1])
        )


def reset(env, theta):
    """Reset to s0(theta) at step index 0.  Out-of-bounds theta raises."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if not env.param_in_bounds(theta):
        raise ContractViolation(f"theta {theta} outside parameter bounds")
    x = env.initial_state(theta[None, :])[0]
    return EnvState(x=x, k=0, theta=theta)


def step(env, state, action):
    """One deterministic transition; flags unsafety and truncation."""
    if not env.action_space.contains(action):
        raise ContractViolation(f"action {action!r} not in action space")
    if isinstance(env.action_space, Discrete):
        actions = np.array([action])
    else:
        actions = np.asarray(action, dtype=float)[None, :]
    nxt = env.step_dynamics(state.x[None, :], state.theta[None, :], actions)[0]
    h = float(env.safety_margin(nxt[None, :], state.theta[None, :])[0])
    new_state = EnvState(x=nxt, k=state.k + 1, theta=state.theta)
    term = bool(env.terminal_safe(nxt[None, :], state.theta[None, :])[0])
    return StepOutcome(
        state=new_state,
        h_value=h,
        unsafe=h > 0.0,
        truncated=term or new_state.k >= env.horizon,
    )


def reward_of(h_value):
    """Indicator cost: -1 when unsafe (h > 0), else 0.  The boundary is safe."""
    h = float(h_value)
    if not np.isfinite(h):
        raise ContractViolation("non-finite safety margin")
    return -1.0 if h > 0.0 else 0.0
