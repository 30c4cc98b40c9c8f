"""avoidlab: a desk-scale laboratory for parameter-robust avoid problems.

The library trains policies that stay outside a failure set for every
feasible parameter of a family of deterministic environments.  It bundles:

- ``nn``: minimal dense networks with hand-rolled reverse-mode gradients
  and an Adam optimizer (the function-approximation substrate).
- ``envs``: the avoid-environment interface plus chain, cruise-control,
  corridor (ToyLevels) and circular-track (Dubins) environments with
  analytic oracles and brute-force value helpers.
- ``rl``: vectorized on-policy rollout collection, GAE, a clipped-surrogate
  PPO update, and a REINFORCE gradient estimator for chain MDPs.
- ``feasibility``: the measured-feasible set, mixture-distribution sampling,
  the feasibility classifier, rejection sampling, and the analytic helpers
  for the classifier guarantees.
- ``saddle``: gradient descent-ascent, FTRL + best-response iterates,
  regret / duality-gap tracking, and two analytic games.
- ``fge``: the feasibility-guided exploration training loop, the rehearsal
  buffer, and the DR / VDS / PLR / RARL baseline reset strategies.
- ``harness``: coverage metrics, experiment orchestration, config, CLI.
"""

from avoidlab.errors import ContractViolation

__all__ = ["ContractViolation"]
__version__ = "0.1.0"
