"""Adaptive cruise control: keep a positive gap to the car in front.

State is (gap, closing speed).  theta = (a_max, v0) sets the control
authority and the initial closing speed.  The gap shrinks at the closing
speed, the control changes the closing speed within [-a_max, a_max], and
the unsafe set is gap < 0 (margin h = -gap).  Braking hard (a = -a_max
every step) minimizes every future closing speed simultaneously and hence
maximizes every future gap, so it is the pointwise-optimal safe policy;
that makes the feasibility oracle below exact.
"""

from __future__ import annotations

import numpy as np

from avoidlab.envs.base import AvoidEnvironment, Box, Discrete
from avoidlab.errors import ContractViolation


class ACCEnv(AvoidEnvironment):
    def __init__(
        self,
        dt=0.1,
        p0=10.0,
        horizon=200,
        a_max_bounds=(0.01, 2.0),
        v0_bounds=(-2.0, 6.0),
        discrete_levels=None,
    ):
        self.dt = float(dt)
        self.p0 = float(p0)
        self.horizon = int(horizon)
        self.param_bounds = np.array(
            [list(a_max_bounds), list(v0_bounds)], dtype=float
        )
        if discrete_levels is None:
            self.discrete_levels = None
            self.action_space = Box(lo=np.array([-1.0]), hi=np.array([1.0]))
        else:
            self.discrete_levels = np.asarray(discrete_levels, dtype=float)
            self.action_space = Discrete(len(self.discrete_levels))

    @property
    def state_dim(self):
        return 2

    def sample_params(self, rng, n):
        lo, hi = self.param_bounds[:, 0], self.param_bounds[:, 1]
        return rng.uniform(lo, hi, size=(n, 2))

    def initial_state(self, thetas):
        out = np.empty((len(thetas), 2))
        out[:, 0] = self.p0
        out[:, 1] = thetas[:, 1]
        return out

    def _accel(self, thetas, actions):
        a_max = thetas[:, 0]
        if self.discrete_levels is None:
            u = np.clip(np.asarray(actions, dtype=float).reshape(len(thetas), -1)[:, 0], -1.0, 1.0)
        else:
            u = self.discrete_levels[np.asarray(actions, dtype=int)]
        return u * a_max

    def step_dynamics(self, states, thetas, actions):
        gap = states[:, 0]
        v = states[:, 1]
        a = self._accel(thetas, actions)
        out = np.empty_like(states)
        out[:, 0] = gap - v * self.dt
        out[:, 1] = v + a * self.dt
        return out

    def safety_margin(self, states, thetas):
        return -states[:, 0]

    def _obs_offset(self):
        return np.array([self.p0, 0.0, 1.0, 2.0])

    def _obs_scale(self):
        return np.array([self.p0, 10.0, 1.0, 4.0])


def acc_feasibility_oracle(theta, env=None):
    """True iff braking at full authority keeps the gap positive all horizon.

    Exact for this system: full braking is pointwise optimal.  Accepts one
    theta of shape (2,) or a stack of shape (n, 2).
    """
    if env is None:
        env = ACCEnv()
    thetas = np.asarray(theta, dtype=float)
    single = thetas.ndim == 1
    if single:
        thetas = thetas[None, :]
    if thetas.shape[1] != 2:
        raise ContractViolation("ACC theta must have two components")
    gap = np.full(len(thetas), env.p0)
    v = thetas[:, 1].copy()
    a_max = thetas[:, 0]
    feasible = gap > 0.0
    for _ in range(env.horizon):
        gap = gap - v * env.dt
        v = v - a_max * env.dt
        feasible &= gap > 0.0
    return bool(feasible[0]) if single else feasible
