"""Avoid environments, analytic oracles, and brute-force value helpers."""

from avoidlab.envs.acc import ACCEnv, acc_feasibility_oracle
from avoidlab.envs.base import (
    AvoidEnvironment,
    Box,
    Discrete,
    EnvState,
    ParameterVector,
    StepOutcome,
    reset,
    reward_of,
    step,
)
from avoidlab.envs.brute_force import BruteForceValues, brute_force_values
from avoidlab.envs.chain import (
    ADVANCE,
    QUIT,
    ChainGradStats,
    ChainMDP,
    MultiChainMDP,
    chain_grad_stats,
)
from avoidlab.envs.dubins import DubinsEnv
from avoidlab.envs.toylevels import ToyLevelsEnv, base_region_probabilities

ENV_REGISTRY = {
    "chain": ChainMDP,
    "multichain": MultiChainMDP,
    "acc": ACCEnv,
    "toylevels": ToyLevelsEnv,
    "dubins": DubinsEnv,
}


def make_env(env_id, **overrides):
    """Build a registered environment; every constant is overridable."""
    try:
        cls = ENV_REGISTRY[env_id]
    except KeyError:
        raise ValueError(f"unknown environment {env_id!r}; known: {sorted(ENV_REGISTRY)}")
    return cls(**overrides)


__all__ = [
    "ACCEnv",
    "ADVANCE",
    "AvoidEnvironment",
    "Box",
    "BruteForceValues",
    "ChainGradStats",
    "ChainMDP",
    "Discrete",
    "DubinsEnv",
    "ENV_REGISTRY",
    "EnvState",
    "MultiChainMDP",
    "ParameterVector",
    "QUIT",
    "StepOutcome",
    "ToyLevelsEnv",
    "acc_feasibility_oracle",
    "base_region_probabilities",
    "brute_force_values",
    "chain_grad_stats",
    "make_env",
    "reset",
    "reward_of",
    "step",
]
