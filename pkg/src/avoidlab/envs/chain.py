"""Chain MDPs and the closed-form REINFORCE gradient statistics.

The single chain has states s_1..s_H.  Action 0 (quit) ends the episode
with reward -1 (modeled as a crash state with positive safety margin);
action 1 (advance) moves right.  Reaching s_H is an absorbing safe
terminal.  The multi-chain variant runs several chains side by side with a
scalar parameter selecting the chain; a chain may carry a blocked cell that
makes it infeasible (entering the cell is unsafe and quitting is unsafe, so
no action sequence survives).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from avoidlab.envs.base import AvoidEnvironment, Discrete
from avoidlab.errors import ContractViolation

QUIT, ADVANCE = 0, 1


class ChainMDP(AvoidEnvironment):
    """Single chain of length H; has no parameters (param_dim 0)."""

    def __init__(self, length=5):
        if length < 2:
            raise ContractViolation("chain length must be >= 2")
        self.length = length
        self.param_bounds = np.zeros((0, 2))
        self.horizon = length - 1
        self.action_space = Discrete(2)

    @property
    def state_dim(self):
        return 1

    def sample_params(self, rng, n):
        return np.zeros((n, 0))

    def initial_state(self, thetas):
        return np.ones((len(thetas), 1))

    def step_dynamics(self, states, thetas, actions):
        i = states[:, 0]
        nxt = np.where(
            i <= 0,  # crash state is absorbing
            0.0,
            np.where(np.asarray(actions) == ADVANCE, np.minimum(i + 1, self.length), 0.0),
        )
        return nxt[:, None]

    def safety_margin(self, states, thetas):
        return np.where(states[:, 0] <= 0, 1.0, -1.0)

    def terminal_safe(self, states, thetas):
        return states[:, 0] >= self.length

    def _obs_scale(self):
        return float(self.length)


class MultiChainMDP(AvoidEnvironment):
    """Several chains; scalar theta in [0, P) selects the chain.

    ``blocked[p]`` (state index or None) marks a cell of chain p that is
    unsafe to enter, which makes that chain infeasible.
    """

    def __init__(self, lengths=(4, 6, 8), blocked=None):
        self.lengths = np.asarray(lengths, dtype=int)
        if np.any(self.lengths < 2):
            raise ContractViolation("chain lengths must be >= 2")
        self.blocked = list(blocked) if blocked is not None else [None] * len(lengths)
        if len(self.blocked) != len(self.lengths):
            raise ContractViolation("blocked list must match number of chains")
        self.param_bounds = np.array([[0.0, float(len(lengths))]])
        self.horizon = int(self.lengths.max()) - 1
        self.action_space = Discrete(2)

    @property
    def state_dim(self):
        return 1

    def chain_index(self, thetas):
        idx = np.floor(thetas[:, 0]).astype(int)
        return np.clip(idx, 0, len(self.lengths) - 1)

    def sample_params(self, rng, n):
        return rng.uniform(0.0, float(len(self.lengths)), size=(n, 1))

    def initial_state(self, thetas):
        return np.ones((len(thetas), 1))

    def step_dynamics(self, states, thetas, actions):
        i = states[:, 0]
        lens = self.lengths[self.chain_index(thetas)]
        nxt = np.where(
            i <= 0,
            0.0,
            np.where(np.asarray(actions) == ADVANCE, np.minimum(i + 1, lens), 0.0),
        )
        return nxt[:, None]

    def safety_margin(self, states, thetas):
        i = states[:, 0]
        idx = self.chain_index(thetas)
        blocked_at = np.array(
            [self.blocked[p] if self.blocked[p] is not None else -1 for p in idx]
        )
        unsafe = (i <= 0) | ((blocked_at >= 0) & (i == blocked_at))
        return np.where(unsafe, 1.0, -1.0)

    def terminal_safe(self, states, thetas):
        lens = self.lengths[self.chain_index(thetas)]
        return states[:, 0] >= lens

    def _obs_scale(self):
        return float(self.lengths.max())


@dataclass
class ChainGradStats:
    """Closed-form statistics of the single-sample REINFORCE gradient.

    ``variance`` is taken over the full termination-time distribution,
    including the atom at T = H where the gradient is zero;
    ``variance_truncated`` sums only T < H (the quantity plotted in the
    source analysis).
    """

    mean: float
    variance: float
    variance_truncated: float


def chain_grad_stats(H, pi, gamma):
    """Exact mean/variance of the per-trajectory gradient for a chain MDP.

    The gradient conditioned on termination time T < H is
    ``g(T) = (-1/pi) (gamma - gamma^T) / (1 - gamma) + 1/(1 - pi)`` and
    ``g(H) = 0``; T has P(T=t) = pi^(t-1) (1-pi) for t < H and
    P(T=H) = pi^(H-1).  gamma = 1 is handled by the limit
    (gamma - gamma^T)/(1 - gamma) -> T - 1.
    """
    if H < 2:
        raise ContractViolation("H must be >= 2")
    if not (0.0 < pi < 1.0):
        raise ContractViolation("pi must be in (0, 1)")
    if not (0.0 < gamma <= 1.0):
        raise ContractViolation("gamma must be in (0, 1]")
    t = np.arange(1, H, dtype=float)
    if gamma == 1.0:
        geom = t - 1.0
    else:
        geom = (gamma - gamma**t) / (1.0 - gamma)
    g = (-1.0 / pi) * geom + 1.0 / (1.0 - pi)
    p_t = pi ** (t - 1.0) * (1.0 - pi)
    p_H = pi ** (H - 1.0)
    mean = float(np.sum(p_t * g))
    var_truncated = float(np.sum(p_t * (g - mean) ** 2))
    variance = var_truncated + p_H * mean**2
    return ChainGradStats(mean=mean, variance=variance, variance_truncated=var_truncated)
