"""Two-lane circular track: the ego car must avoid two constant-speed cars.

theta = (w1, w2) are the other cars' angular velocities.  Ego state is
(x, y, heading, speed); controls are (steer, accel) in [-1, 1]^2.  The other
cars follow fixed lane circles deterministically in the step index, so the
whole system stays deterministic in (theta, action sequence).  Unsafe means
overlapping another car's disc or leaving the track annulus.
"""

from __future__ import annotations

import numpy as np

from avoidlab.envs.base import AvoidEnvironment, Box


class DubinsEnv(AvoidEnvironment):
    def __init__(
        self,
        r_inner=3.0,
        w_lane=0.5,
        eps=0.05,
        car_radius=0.2,
        v_min=0.5,
        v_max=2.0,
        dt=0.1,
        horizon=200,
        omega_bounds=(np.pi / 32, 11 * np.pi / 40),
    ):
        self.r_inner = float(r_inner)
        self.w_lane = float(w_lane)
        self.eps = float(eps)
        self.car_radius = float(car_radius)
        self.v_min = float(v_min)
        self.v_max = float(v_max)
        self.dt = float(dt)
        self.horizon = int(horizon)
        self.r_outer = self.r_inner + 2.0 * self.w_lane + 2.0 * self.eps
        self.lane_radii = (
            self.r_inner + self.eps + self.w_lane / 2.0,
            self.r_inner + self.eps + 1.5 * self.w_lane + self.eps,
        )
        self.other_start_angles = (np.pi, 1.5 * np.pi)
        self.param_bounds = np.array([list(omega_bounds), list(omega_bounds)])
        self.action_space = Box(lo=np.array([-1.0, -1.0]), hi=np.array([1.0, 1.0]))

    @property
    def state_dim(self):
        return 5  # (x, y, heading, speed, step index for the other cars)

    def sample_params(self, rng, n):
        lo, hi = self.param_bounds[:, 0], self.param_bounds[:, 1]
        return rng.uniform(lo, hi, size=(n, 2))

    def initial_state(self, thetas):
        out = np.zeros((len(thetas), 5))
        out[:, 0] = self.lane_radii[0]  # inner lane, right side of the track
        out[:, 1] = 0.0
        out[:, 2] = np.pi / 2  # tangent, counterclockwise
        out[:, 3] = 1.0
        out[:, 4] = 0.0
        return out

    def other_positions(self, k, thetas):
        """Positions of the two other cars after k steps; (n, 2, 2)."""
        out = np.empty((len(thetas), 2, 2))
        for i in range(2):
            ang = self.other_start_angles[i] + thetas[:, i] * self.dt * k
            out[:, i, 0] = self.lane_radii[i] * np.cos(ang)
            out[:, i, 1] = self.lane_radii[i] * np.sin(ang)
        return out

    def step_dynamics(self, states, thetas, actions):
        actions = np.asarray(actions, dtype=float).reshape(len(states), 2)
        steer = np.clip(actions[:, 0], -1.0, 1.0)
        acc = np.clip(actions[:, 1], -1.0, 1.0)
        x, y, heading, v, k = (states[:, i] for i in range(5))
        mid_radius = (self.r_inner + self.r_outer) / 2.0
        omega = steer * 2.0 * v / mid_radius
        heading = heading + omega * self.dt
        out = np.empty_like(states)
        out[:, 0] = x + v * np.cos(heading) * self.dt
        out[:, 1] = y + v * np.sin(heading) * self.dt
        out[:, 2] = np.mod(heading + np.pi, 2 * np.pi) - np.pi
        out[:, 3] = np.clip(v + acc * self.dt, self.v_min, self.v_max)
        out[:, 4] = k + 1.0
        return out

    def safety_margin(self, states, thetas):
        x, y = states[:, 0], states[:, 1]
        k = states[:, 4]
        r = np.hypot(x, y)
        margin = np.maximum(
            self.r_inner - (r - self.car_radius), (r + self.car_radius) - self.r_outer
        )
        others = np.empty((len(states), 2, 2))
        for i in range(2):
            ang = self.other_start_angles[i] + thetas[:, i] * self.dt * k
            others[:, i, 0] = self.lane_radii[i] * np.cos(ang)
            others[:, i, 1] = self.lane_radii[i] * np.sin(ang)
        for i in range(2):
            d = np.hypot(x - others[:, i, 0], y - others[:, i, 1])
            margin = np.maximum(margin, 2.0 * self.car_radius - d)
        return margin

    def _obs_offset(self):
        return np.array([0.0, 0.0, 0.0, 1.25, self.horizon / 2, 0.45, 0.45])

    def _obs_scale(self):
        r = self.r_outer
        return np.array([r, r, np.pi, 0.75, self.horizon / 2, 0.45, 0.45])
