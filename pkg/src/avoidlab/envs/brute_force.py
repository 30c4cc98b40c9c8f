"""Exhaustive minimax values over short-horizon discrete action sequences.

For deterministic dynamics and a single initial state, optimizing over
open-loop action sequences equals optimizing over policies, so exhaustive
enumeration yields exact values: the worst-over-time margin minimized over
sequences, and the best achievable indicator sum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from avoidlab.envs.base import Discrete
from avoidlab.errors import ContractViolation

MAX_SEQUENCES = 2_000_000


@dataclass
class BruteForceValues:
    v_reach: float  # min over sequences of max_k h(x_k), frozen at first hit
    v_sum: float  # max over sequences of the indicator sum up to first hit


def brute_force_values(env, theta, horizon=None):
    """Enumerate every action sequence of the given horizon.

    Requires a discrete action space and a small search tree
    (branching^horizon <= 2e6).  Sequences freeze at their first unsafe
    state or at an absorbing safe terminal, so ``v_reach`` is exact for
    feasible instances and sign-exact (positive) for infeasible ones.
    Both values include the spawn state: a spawn inside the unsafe set
    gives ``v_reach > 0`` and ``v_sum = -1`` for every sequence.
    """
    if not isinstance(env.action_space, Discrete):
        raise ContractViolation("brute force needs a discrete action space")
    horizon = env.horizon if horizon is None else int(horizon)
    n_actions = env.action_space.n
    n_seq = n_actions**horizon
    if n_seq > MAX_SEQUENCES:
        raise ContractViolation(
            f"{n_actions}^{horizon} = {n_seq} sequences exceeds the {MAX_SEQUENCES} cap"
        )
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if not env.param_in_bounds(theta):
        raise ContractViolation(f"theta {theta} outside parameter bounds")

    thetas = np.tile(theta, (n_seq, 1))
    states = np.repeat(env.initial_state(theta[None, :]), n_seq, axis=0)
    seq_ids = np.arange(n_seq)

    h0 = env.safety_margin(states, thetas)
    max_h = h0.copy()
    hit = h0 > 0.0
    done = hit | env.terminal_safe(states, thetas)
    for k in range(horizon):
        # action of sequence s at step k, in lexicographic sequence order
        actions = (seq_ids // n_actions ** (horizon - 1 - k)) % n_actions
        nxt = env.step_dynamics(states, thetas, actions)
        states = np.where(done[:, None], states, nxt)
        h = env.safety_margin(states, thetas)
        active = ~done
        max_h = np.where(active, np.maximum(max_h, h), max_h)
        new_hit = active & (h > 0.0)
        hit |= new_hit
        done |= new_hit | (active & env.terminal_safe(states, thetas))
    v_reach = float(max_h.min())
    v_sum = 0.0 if not hit.all() else -1.0
    return BruteForceValues(v_reach=v_reach, v_sum=v_sum)
