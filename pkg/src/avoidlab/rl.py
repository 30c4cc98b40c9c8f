"""On-policy actor-critic training over parameterized avoid environments.

Rollouts run many environment instances in lockstep.  Episodes terminate at
the first unsafe state (reward -1, no bootstrap) or truncate at the horizon
or an absorbing safe terminal (bootstrap from the value function); rewards
are 0 everywhere else, so an episode's return is 0 exactly when it was safe.
A reset whose spawn state is already unsafe is recorded as a zero-length
failed episode and redrawn - no action is ever taken from inside the
failure set.

The PPO update is the standard clipped surrogate with per-batch advantage
normalization; gradients are computed analytically and pushed through the
network's reverse mode.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from avoidlab import nn
from avoidlab.envs.base import Box, Discrete
from avoidlab.errors import ContractViolation

RESET_ROUND_CAP = 1000


@dataclass
class PpoConfig:
    gamma: float = 0.99
    lam: float = 0.95
    clip: float = 0.2
    entropy_coef: float = 1e-3
    policy_lr: float = 4e-4
    value_lr: float = 1e-3
    epochs: int = 4
    minibatch: int = 256
    value_coef: float = 0.5
    n_envs: int = 256
    n_steps: int = 30

    def __post_init__(self):
        if not (0.0 < self.gamma <= 1.0) or not (0.0 < self.lam <= 1.0):
            raise ContractViolation("gamma and lam must be in (0, 1]")
        if self.clip <= 0.0:
            raise ContractViolation("clip must be positive")


@dataclass
class EpisodeRecord:
    """Outcome of one completed episode; zero-length means unsafe at spawn."""

    theta: np.ndarray
    safe: bool
    length: int
    score: float = 0.0


@dataclass
class RolloutBatch:
    obs: np.ndarray  # (T, N, obs_dim)
    thetas: np.ndarray  # (T, N, k)
    actions: np.ndarray  # (T, N) ints or (T, N, a) floats
    logp: np.ndarray  # (T, N)
    rewards: np.ndarray  # (T, N), -1 exactly where unsafe fired
    values: np.ndarray  # (T, N)
    dones: np.ndarray  # (T, N) unsafe terminal
    truncs: np.ndarray  # (T, N) episode cut without unsafety
    boot: np.ndarray  # (T, N) bootstrap value where truncs
    episodes: list  # completed EpisodeRecords, in completion order
    segments: list  # (env index, t_start, t_end, episode list index or None)


class CategoricalPolicy:
    def __init__(self, params):
        if params.head != "categorical":
            raise ContractViolation("categorical policy needs a categorical head")
        self.params = params

    @property
    def n_actions(self):
        return self.params.out_dim

    def act(self, obs, rng):
        logits = nn.forward(self.params, obs)
        logp_all = nn.log_softmax(logits)
        cdf = np.cumsum(np.exp(logp_all), axis=1)
        u = rng.random(len(obs))
        actions = (u[:, None] > cdf).sum(axis=1)
        np.clip(actions, 0, self.n_actions - 1, out=actions)
        return actions, logp_all[np.arange(len(obs)), actions]

    def mode(self, obs):
        return np.argmax(nn.forward(self.params, obs), axis=1)

    def action_probs(self, obs):
        return nn.categorical_probs(nn.forward(self.params, obs))


class GaussianPolicy:
    def __init__(self, params, action_space):
        if params.head != "gaussian":
            raise ContractViolation("gaussian policy needs a gaussian head")
        self.params = params
        self.lo = np.asarray(action_space.lo, dtype=float)
        self.hi = np.asarray(action_space.hi, dtype=float)

    def act(self, obs, rng):
        mean = nn.forward(self.params, obs)
        std = np.exp(self.params.log_std())
        actions = mean + std * rng.standard_normal(mean.shape)
        return actions, self._logp(actions, mean, std)

    def mode(self, obs):
        return np.clip(nn.forward(self.params, obs), self.lo, self.hi)

    @staticmethod
    def _logp(actions, mean, std):
        z = (actions - mean) / std
        return np.sum(-0.5 * z**2 - np.log(std) - 0.5 * np.log(2 * np.pi), axis=1)


class ValueFn:
    def __init__(self, params):
        if params.out_dim != 1:
            raise ContractViolation("value head must be scalar")
        self.params = params

    def value(self, obs):
        return nn.forward(self.params, obs)[:, 0]


@dataclass
class ActorCritic:
    policy: object
    value: ValueFn
    policy_opt: nn.OptimState
    value_opt: nn.OptimState


def make_actor_critic(env, cfg, rng, hidden=(64, 64)):
    """Policy/value networks sized to the environment's observation space."""
    obs_dim = env.obs_dim
    if isinstance(env.action_space, Discrete):
        p = nn.init_mlp((obs_dim, *hidden, env.action_space.n), "categorical", rng)
        policy = CategoricalPolicy(p)
    else:
        p = nn.init_mlp((obs_dim, *hidden, env.action_space.dim), "gaussian", rng)
        policy = GaussianPolicy(p, env.action_space)
    v = nn.init_mlp((obs_dim, *hidden, 1), "linear", rng)
    return ActorCritic(
        policy=policy,
        value=ValueFn(v),
        policy_opt=nn.optim_state(p, cfg.policy_lr),
        value_opt=nn.optim_state(v, cfg.value_lr),
    )


def _safe_resets(env, reset_sampler, n, episodes):
    """Draw spawns until all n are safe; unsafe spawns become length-0 records."""
    thetas = np.empty((n, env.param_dim))
    states = np.empty((n, env.state_dim))
    pending = np.arange(n)
    for _ in range(RESET_ROUND_CAP):
        draw = np.atleast_2d(reset_sampler(len(pending)))
        s0 = env.initial_state(draw)
        h0 = env.safety_margin(s0, draw)
        unsafe = h0 > 0.0
        for theta in draw[unsafe]:
            episodes.append(EpisodeRecord(theta=theta.copy(), safe=False, length=0))
        ok = ~unsafe
        idx = pending[ok]
        thetas[idx] = draw[ok]
        states[idx] = s0[ok]
        pending = pending[unsafe]
        if len(pending) == 0:
            return states, thetas
    raise ContractViolation("reset sampler kept producing unsafe spawns")


class RolloutWorkers:
    """Persistent lockstep environment instances, resumed across windows.

    Episodes longer than one rollout window carry over; only episode ends
    trigger reset draws, so the reset-sampler stream depends solely on the
    sequence of episode outcomes.
    """

    def __init__(self, env, n_envs):
        self.env = env
        self.n_envs = n_envs
        self.states = None
        self.thetas = None
        self.ep_len = np.zeros(n_envs, dtype=int)


def collect(policy, value_fn, env, reset_sampler, n_envs, n_steps, rng, workers=None):
    """Roll n_envs instances for n_steps, resetting through the sampler.

    ``reset_sampler(n)`` must return n in-bounds parameter rows.  Episodes
    cut by the rollout window are bootstrapped but not recorded as
    completed; passing the same ``workers`` into the next call resumes
    them.  Identical seeds and samplers give bit-identical batches.
    """
    episodes = []
    segments = []
    if workers is None:
        workers = RolloutWorkers(env, n_envs)
    if workers.states is None:
        workers.states, workers.thetas = _safe_resets(env, reset_sampler, n_envs, episodes)
        workers.ep_len[:] = 0
    states, thetas, ep_len = workers.states, workers.thetas, workers.ep_len
    ep_start = np.zeros(n_envs, dtype=int)

    k = env.param_dim
    discrete = isinstance(env.action_space, Discrete)
    obs_buf = np.empty((n_steps, n_envs, env.obs_dim))
    theta_buf = np.empty((n_steps, n_envs, k))
    act_buf = np.empty((n_steps, n_envs), dtype=int) if discrete else np.empty(
        (n_steps, n_envs, env.action_space.dim)
    )
    logp_buf = np.empty((n_steps, n_envs))
    rew_buf = np.zeros((n_steps, n_envs))
    val_buf = np.empty((n_steps, n_envs))
    done_buf = np.zeros((n_steps, n_envs), dtype=bool)
    trunc_buf = np.zeros((n_steps, n_envs), dtype=bool)
    boot_buf = np.zeros((n_steps, n_envs))

    for t in range(n_steps):
        obs = env.observe(states, thetas)
        actions, logp = policy.act(obs, rng)
        obs_buf[t] = obs
        theta_buf[t] = thetas
        act_buf[t] = actions
        logp_buf[t] = logp
        val_buf[t] = value_fn.value(obs)

        next_states = env.step_dynamics(states, thetas, actions)
        h = env.safety_margin(next_states, thetas)
        unsafe = h > 0.0
        ep_len += 1
        term = env.terminal_safe(next_states, thetas)
        horizon_hit = ep_len >= env.horizon
        trunc = (~unsafe) & (term | horizon_hit | (t == n_steps - 1))

        rew_buf[t] = np.where(unsafe, -1.0, 0.0)
        done_buf[t] = unsafe
        trunc_buf[t] = trunc
        if trunc.any():
            idx = np.nonzero(trunc)[0]
            boot_buf[t, idx] = value_fn.value(
                env.observe(next_states[idx], thetas[idx])
            )

        window_cut = trunc & (~term) & (~horizon_hit)
        ended = unsafe | (trunc & ~window_cut)
        for i in np.nonzero(ended)[0]:
            episodes.append(
                EpisodeRecord(theta=thetas[i].copy(), safe=not unsafe[i], length=int(ep_len[i]))
            )
            segments.append((i, int(ep_start[i]), t + 1, len(episodes) - 1))
        for i in np.nonzero(window_cut)[0]:
            segments.append((i, int(ep_start[i]), t + 1, None))

        need = np.nonzero(ended)[0]
        if len(need):
            new_states, new_thetas = _safe_resets(env, reset_sampler, len(need), episodes)
            next_states[need] = new_states
            thetas[need] = new_thetas
            ep_len[need] = 0
            if t < n_steps - 1:
                ep_start[need] = t + 1
        states = next_states

    workers.states, workers.thetas, workers.ep_len = states, thetas, ep_len
    return RolloutBatch(
        obs=obs_buf, thetas=theta_buf, actions=act_buf, logp=logp_buf,
        rewards=rew_buf, values=val_buf, dones=done_buf, truncs=trunc_buf,
        boot=boot_buf, episodes=episodes, segments=segments,
    )


def gae(batch, gamma, lam):
    """Generalized advantage recursion per environment column.

    Terminal (unsafe) steps bootstrap 0; truncated steps bootstrap the
    stored next-state value.  Returns (advantages, returns), both (T, N).
    """
    T, N = batch.rewards.shape
    adv = np.zeros((T, N))
    carry = np.zeros(N)
    for t in range(T - 1, -1, -1):
        ended = batch.dones[t] | batch.truncs[t]
        if t == T - 1:
            v_next = np.where(batch.dones[t], 0.0, batch.boot[t])
        else:
            v_next = np.where(
                batch.dones[t], 0.0, np.where(batch.truncs[t], batch.boot[t], batch.values[t + 1])
            )
        delta = batch.rewards[t] + gamma * v_next - batch.values[t]
        carry = delta + gamma * lam * np.where(ended, 0.0, carry)
        adv[t] = carry
    return adv, adv + batch.values


def episode_scores(batch, adv):
    """Fill per-episode mean |advantage| scores (used by level-replay)."""
    flat_adv = adv
    for env_i, t0, t1, ep_idx in batch.segments:
        if ep_idx is not None:
            batch.episodes[ep_idx].score = float(np.mean(np.abs(flat_adv[t0:t1, env_i])))


def _policy_grad_categorical(policy, obs, actions, logp_old, adv, clip, ent_coef):
    m = len(obs)
    logits = nn.forward(policy.params, obs)
    logp_all = nn.log_softmax(logits)
    probs = np.exp(logp_all)
    logp = logp_all[np.arange(m), actions]
    ratio = np.exp(logp - logp_old)
    surr1 = ratio * adv
    surr2 = np.clip(ratio, 1.0 - clip, 1.0 + clip) * adv
    entropy = -np.sum(probs * logp_all, axis=1)
    loss = -np.mean(np.minimum(surr1, surr2)) - ent_coef * np.mean(entropy)

    active = surr1 <= surr2
    dl_dlogp = -(active * adv * ratio) / m
    onehot = np.zeros_like(probs)
    onehot[np.arange(m), actions] = 1.0
    upstream = dl_dlogp[:, None] * (onehot - probs)
    upstream += (ent_coef / m) * probs * (logp_all + entropy[:, None])
    grad, _ = nn.backward(policy.params, obs, upstream)
    stats = {
        "entropy": float(np.mean(entropy)),
        "approx_kl": float(np.mean(logp_old - logp)),
        "clip_frac": float(np.mean(~active & (adv != 0.0))),
    }
    return loss, grad, stats


def _policy_grad_gaussian(policy, obs, actions, logp_old, adv, clip, ent_coef):
    m = len(obs)
    mean = nn.forward(policy.params, obs)
    log_std = policy.params.log_std()
    std = np.exp(log_std)
    z = (actions - mean) / std
    logp = np.sum(-0.5 * z**2 - log_std - 0.5 * np.log(2 * np.pi), axis=1)
    ratio = np.exp(logp - logp_old)
    surr1 = ratio * adv
    surr2 = np.clip(ratio, 1.0 - clip, 1.0 + clip) * adv
    entropy = np.sum(log_std + 0.5 * np.log(2 * np.pi * np.e)) * np.ones(m)
    loss = -np.mean(np.minimum(surr1, surr2)) - ent_coef * np.mean(entropy)

    active = surr1 <= surr2
    dl_dlogp = -(active * adv * ratio) / m
    upstream_mean = dl_dlogp[:, None] * (actions - mean) / std**2
    grad, _ = nn.backward(policy.params, obs, upstream_mean)
    dl_dlogstd = np.sum(dl_dlogp[:, None] * (z**2 - 1.0), axis=0) - ent_coef
    grad[-len(log_std):] += dl_dlogstd
    stats = {
        "entropy": float(np.mean(entropy)),
        "approx_kl": float(np.mean(logp_old - logp)),
        "clip_frac": float(np.mean(~active & (adv != 0.0))),
    }
    return loss, grad, stats


def ppo_update(ac, batch, cfg, rng):
    """Clipped-surrogate policy epochs plus squared-error value epochs."""
    T, N = batch.rewards.shape
    adv, ret = gae(batch, cfg.gamma, cfg.lam)
    episode_scores(batch, adv)
    obs = batch.obs.reshape(T * N, -1)
    actions = batch.actions.reshape(T * N, -1)
    if isinstance(ac.policy, CategoricalPolicy):
        actions = actions[:, 0].astype(int)
    logp_old = batch.logp.reshape(-1)
    adv_flat = adv.reshape(-1)
    ret_flat = ret.reshape(-1)
    adv_norm = (adv_flat - adv_flat.mean()) / (adv_flat.std() + 1e-8)

    stats = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0,
             "approx_kl": 0.0, "clip_frac": 0.0}
    n_batches = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(T * N)
        for start in range(0, T * N, cfg.minibatch):
            idx = order[start : start + cfg.minibatch]
            if isinstance(ac.policy, CategoricalPolicy):
                loss, grad, s = _policy_grad_categorical(
                    ac.policy, obs[idx], actions[idx], logp_old[idx], adv_norm[idx],
                    cfg.clip, cfg.entropy_coef,
                )
            else:
                loss, grad, s = _policy_grad_gaussian(
                    ac.policy, obs[idx], actions[idx], logp_old[idx], adv_norm[idx],
                    cfg.clip, cfg.entropy_coef,
                )
            if not np.isfinite(loss):
                raise RuntimeError(f"non-finite policy loss ({loss}); stats so far {stats}")
            nn.optim_step(ac.policy_opt, ac.policy.params, grad)
            nn.clamp_log_std(ac.policy.params)

            v = nn.forward(ac.value.params, obs[idx])[:, 0]
            v_err = v - ret_flat[idx]
            v_loss = cfg.value_coef * 0.5 * float(np.mean(v_err**2))
            if not np.isfinite(v_loss):
                raise RuntimeError("non-finite value loss")
            upstream = (cfg.value_coef * v_err / len(idx))[:, None]
            v_grad, _ = nn.backward(ac.value.params, obs[idx], upstream)
            nn.optim_step(ac.value_opt, ac.value.params, v_grad)

            n_batches += 1
            stats["policy_loss"] += float(loss)
            stats["value_loss"] += v_loss
            for key in ("entropy", "approx_kl", "clip_frac"):
                stats[key] += s[key]
    for key in stats:
        stats[key] /= max(n_batches, 1)
    safe_eps = [e for e in batch.episodes if e.safe]
    stats["n_episodes"] = len(batch.episodes)
    stats["safety_rate"] = len(safe_eps) / max(len(batch.episodes), 1)
    stats["mean_return"] = float(batch.rewards.sum() / max(len(batch.episodes), 1))
    return stats


def reinforce_mc_grad(chain_env, pi, gamma, n_samples, rng):
    """Monte-Carlo mean/variance of the per-trajectory gradient on a chain.

    Simulates raw Bernoulli action sequences, accumulates discounted
    returns by reverse recursion over the realized rewards, and sums
    grad-log-prob times return per trajectory (independent of the
    closed-form route).
    """
    H = chain_env.length
    advance = rng.random((n_samples, H - 1)) < pi
    quit_any = ~advance.all(axis=1)
    first_quit = np.where(quit_any, np.argmin(advance, axis=1), H - 1)
    T = np.where(quit_any, first_quit + 1, H)

    rewards = np.zeros((n_samples, H - 1))
    rows = np.nonzero(quit_any)[0]
    rewards[rows, first_quit[rows]] = -1.0
    returns = np.zeros((n_samples, H - 1))
    acc = np.zeros(n_samples)
    for t in range(H - 2, -1, -1):
        acc = rewards[:, t] + gamma * acc
        returns[:, t] = acc

    steps = np.arange(1, H)[None, :]
    taken = steps <= T[:, None]
    taken &= steps <= H - 1
    gradlog = np.where(advance, 1.0 / pi, -1.0 / (1.0 - pi))
    g = np.sum(np.where(taken, gradlog * returns, 0.0), axis=1)
    return float(np.mean(g)), float(np.var(g, ddof=1))
