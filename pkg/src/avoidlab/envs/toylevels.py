"""Falling-corridor levels with easy, infeasible, and rare-hard spawn bands.

The agent spawns at the top of a corridor at x-position theta and falls one
row per step; each step it may shift left/right by a constant or hold.  The
corridor layout (all constants overridable):

- easy band   [0, 9):        open column, landing anywhere left of 9 is safe.
- wall band   [9, 9.999):    a red column from mid-height to the top; spawns
                             here start inside it, so the band is infeasible.
- hard band   [9.999, 10]:   a narrow chute right of the wall with a constant
                             rightward disturbance.  Landing at x >= 9 is red,
                             so the agent must hug the right edge until it has
                             fallen below the wall top, then commit to shifting
                             left - a behavior the easy band never teaches.

The base parameter distribution is uniform over the corridor, which gives
the spawn-band proportions 90% / 9.99% / 0.01%.
"""

from __future__ import annotations

import numpy as np

from avoidlab.envs.base import AvoidEnvironment, Discrete

SHIFT_LEFT, SHIFT_RIGHT, NO_SHIFT = 0, 1, 2


class ToyLevelsEnv(AvoidEnvironment):
    def __init__(
        self,
        width=10.0,
        height=8,
        shift=1.0,
        wall_lo=9.0,
        wall_hi=9.999,
        wall_base=4.0,
        disturbance=0.5,
        red_floor_lo=9.0,
    ):
        self.width = float(width)
        self.height = int(height)
        self.shift = float(shift)
        self.wall_lo = float(wall_lo)
        self.wall_hi = float(wall_hi)
        self.wall_base = float(wall_base)
        self.disturbance = float(disturbance)
        self.red_floor_lo = float(red_floor_lo)
        self.param_bounds = np.array([[0.0, self.width]])
        self.horizon = self.height
        self.action_space = Discrete(3)

    @property
    def state_dim(self):
        return 2  # (x, y)

    def sample_params(self, rng, n):
        return rng.uniform(0.0, self.width, size=(n, 1))

    def initial_state(self, thetas):
        out = np.empty((len(thetas), 2))
        out[:, 0] = thetas[:, 0]
        out[:, 1] = float(self.height)
        return out

    def step_dynamics(self, states, thetas, actions):
        x = states[:, 0]
        y = states[:, 1]
        actions = np.asarray(actions, dtype=int)
        move = np.where(
            actions == SHIFT_LEFT, -self.shift, np.where(actions == SHIFT_RIGHT, self.shift, 0.0)
        )
        drift = np.where(x >= self.wall_hi, self.disturbance, 0.0)
        out = np.empty_like(states)
        out[:, 0] = np.clip(x + move + drift, 0.0, self.width)
        out[:, 1] = y - 1.0
        return out

    def safety_margin(self, states, thetas):
        x = states[:, 0]
        y = states[:, 1]
        in_wall = (x >= self.wall_lo) & (x < self.wall_hi) & (y >= self.wall_base)
        on_red_floor = (y <= 0.0) & (x >= self.red_floor_lo)
        return np.where(in_wall | on_red_floor, 1.0, -1.0)

    def regions(self, thetas):
        """Spawn-band code per theta: 0 easy, 1 hard, 2 infeasible."""
        x = np.asarray(thetas, dtype=float).reshape(-1)
        out = np.zeros(x.shape, dtype=int)
        out[(x >= self.wall_lo) & (x < self.wall_hi)] = 2
        out[x >= self.wall_hi] = 1
        return out

    def _obs_offset(self):
        return np.array([self.width / 2, self.height / 2, self.width / 2])

    def _obs_scale(self):
        return np.array([self.width / 2, self.height / 2, self.width / 2])


def base_region_probabilities(env):
    """Base-distribution mass of (easy, hard, infeasible) spawn bands."""
    easy = env.wall_lo / env.width
    infeasible = (env.wall_hi - env.wall_lo) / env.width
    hard = 1.0 - easy - infeasible
    return easy, hard, infeasible
