"""Feasibility machinery: measured-feasible set, mixture sampling, classifier.

A parameter observed safe once is feasible forever (deterministic dynamics),
so positive labels are trustworthy while negatives may only reflect a weak
policy.  The classifier is therefore trained on a mixture distribution that
blends trusted positives from the measured-feasible set with noisy on-policy
labels; thresholding its output never marks a truly infeasible parameter
feasible, and the analytic helpers below quantify the false-negative side.

Snapshot format (versioned): the measured-feasible set persists as an
``.npz`` archive with keys ``version``, ``bounds``, ``resolution``,
``thetas``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from avoidlab import nn
from avoidlab.errors import ContractViolation

SNAPSHOT_VERSION = 1
MEASURED_FEASIBLE = "measured-feasible"
ON_POLICY = "on-policy"


@dataclass
class MixtureConfig:
    """Mix coefficient and decision threshold, both in the open unit interval."""

    alpha: float = 0.5
    beta: float = 0.5

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise ContractViolation("alpha must be in (0, 1)")
        if not (0.0 < self.beta < 1.0):
            raise ContractViolation("beta must be in (0, 1)")


@dataclass
class LabeledParamSample:
    theta: np.ndarray
    label: int
    source: str

    def __post_init__(self):
        if self.source not in (MEASURED_FEASIBLE, ON_POLICY):
            raise ContractViolation(f"unknown source {self.source!r}")
        if self.source == MEASURED_FEASIBLE and self.label != 1:
            raise ContractViolation("measured-feasible samples must carry label 1")


class FeasibleSet:
    """Append-only store of parameters observed safe, deduplicated on a grid.

    Two points are duplicates when they are within delta in every dimension,
    with delta = (hi - lo) / resolution per dimension.  Lookup hashes cell
    indices and checks the 3^k neighboring cells, so inserts stay O(1).
    """

    def __init__(self, bounds, resolution=256):
        self.bounds = np.asarray(bounds, dtype=float)
        if self.bounds.ndim != 2 or self.bounds.shape[1] != 2:
            raise ContractViolation("bounds must have shape (k, 2)")
        self.resolution = int(resolution)
        self.delta = (self.bounds[:, 1] - self.bounds[:, 0]) / self.resolution
        self._cells = {}
        self._buf = np.empty((256, self.dim))
        self._count = 0
        k = self.dim
        self._neighbor_offsets = (
            np.indices((3,) * k).reshape(k, -1).T - 1 if k else np.zeros((1, 0), int)
        )

    @property
    def dim(self):
        return self.bounds.shape[0]

    def __len__(self):
        return self._count

    @property
    def thetas(self):
        return self._buf[: self._count]

    def _cell(self, theta):
        return tuple(np.floor((theta - self.bounds[:, 0]) / self.delta).astype(int))

    def has_duplicate(self, theta):
        theta = np.asarray(theta, dtype=float)
        cell = np.asarray(self._cell(theta))
        for off in self._neighbor_offsets:
            for idx in self._cells.get(tuple(cell + off), ()):
                if np.all(np.abs(self._buf[idx] - theta) < self.delta):
                    return True
        return False

    def add(self, theta):
        theta = np.asarray(theta, dtype=float).reshape(-1)
        if theta.shape != (self.dim,):
            raise ContractViolation(f"theta shape {theta.shape}, expected ({self.dim},)")
        if self.has_duplicate(theta):
            return False
        if self._count == len(self._buf):
            grown = np.empty((2 * len(self._buf), self.dim))
            grown[: self._count] = self._buf[: self._count]
            self._buf = grown
        self._buf[self._count] = theta
        self._cells.setdefault(self._cell(theta), []).append(self._count)
        self._count += 1
        return True

    def sample(self, n, rng, recent_cap=None):
        """Uniform draws (with replacement), optionally from the newest entries."""
        if self._count == 0:
            raise ContractViolation("cannot sample from an empty feasible set")
        lo = 0 if recent_cap is None else max(0, self._count - int(recent_cap))
        idx = rng.integers(lo, self._count, size=n)
        return self._buf[idx].copy()

    def save(self, path):
        np.savez(
            path,
            version=SNAPSHOT_VERSION,
            bounds=self.bounds,
            resolution=self.resolution,
            thetas=self.thetas.copy(),
        )

    @classmethod
    def load(cls, path):
        with np.load(path, allow_pickle=False) as data:
            if int(data["version"]) != SNAPSHOT_VERSION:
                raise ContractViolation("unsupported feasible-set snapshot version")
            out = cls(data["bounds"], int(data["resolution"]))
            for theta in data["thetas"]:
                out.add(theta)
        return out


def record_feasible(feasible_set, theta):
    """Store a parameter whose episode ran safely to truncation; True if new."""
    return feasible_set.add(theta)


def draw_pmix(feasible_set, episodes, alpha, n, rng, stats=None):
    """Draw labeled samples from the mixture distribution.

    With probability alpha: a uniform positive from the measured-feasible
    set; otherwise a (theta, episode-safe?) pair from the given rollout
    episodes.  An empty feasible set falls back to on-policy samples only
    and flags it in ``stats`` (a dict, if provided).  The endpoints
    alpha = 0 and alpha = 1 give the degenerate single-source mixtures.
    """
    if not (0.0 <= alpha <= 1.0):
        raise ContractViolation("alpha must be in [0, 1]")
    episodes = list(episodes)
    if not episodes and len(feasible_set) == 0:
        raise ContractViolation("need episodes or a nonempty feasible set")
    fallback = len(feasible_set) == 0
    use_positive = rng.random(n) < alpha
    if fallback:
        use_positive[:] = False
    out = []
    n_pos = int(np.count_nonzero(use_positive))
    positives = (
        feasible_set.sample(n_pos, rng, recent_cap=50_000) if n_pos else np.empty((0, 0))
    )
    pos_iter = iter(positives)
    for flag in use_positive:
        if flag:
            out.append(LabeledParamSample(next(pos_iter), 1, MEASURED_FEASIBLE))
        else:
            if not episodes:
                raise ContractViolation("no rollout episodes to sample from")
            theta, safe = _episode_pair(episodes[rng.integers(len(episodes))])
            out.append(LabeledParamSample(np.asarray(theta, dtype=float), int(safe), ON_POLICY))
    if stats is not None:
        stats["pmix_fallback"] = fallback
        stats["pmix_positive_fraction"] = n_pos / max(n, 1)
    return out


def _episode_pair(episode):
    if hasattr(episode, "theta"):
        return episode.theta, episode.safe
    theta, safe = episode
    return theta, safe


class FeasibilityClassifier:
    """Sigmoid-head network over bound-normalized parameters.

    Serves both the feasibility model q(f=1 | theta) and the per-policy
    safety model p(f=1 | theta); they differ only in training data.
    """

    def __init__(self, bounds, hidden=(64, 64), lr=1e-3, rng=None):
        self.bounds = np.asarray(bounds, dtype=float)
        rng = np.random.default_rng(0) if rng is None else rng
        sizes = (self.bounds.shape[0], *hidden, 1)
        self.net = nn.init_mlp(sizes, "sigmoid", rng)
        self.opt = nn.optim_state(self.net, lr=lr)

    def _normalize(self, thetas):
        lo, hi = self.bounds[:, 0], self.bounds[:, 1]
        return 2.0 * (np.asarray(thetas, dtype=float) - lo) / (hi - lo) - 1.0

    def predict(self, thetas):
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        return nn.forward(self.net, self._normalize(thetas))[:, 0]

    def train_on(self, thetas, labels, epochs, rng, minibatch=256):
        """Binary cross-entropy epochs over the given arrays; returns losses."""
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        labels = np.asarray(labels, dtype=float).reshape(-1)
        if len(thetas) != len(labels) or len(thetas) == 0:
            raise ContractViolation("need matching, nonempty thetas and labels")
        x = self._normalize(thetas)
        losses = []
        for _ in range(epochs):
            order = rng.permutation(len(x))
            epoch_loss = 0.0
            for start in range(0, len(x), minibatch):
                idx = order[start : start + minibatch]
                xb, yb = x[idx], labels[idx]
                p = nn.forward(self.net, xb)[:, 0]
                p_safe = np.clip(p, 1e-12, 1.0 - 1e-12)
                loss = -np.mean(yb * np.log(p_safe) + (1 - yb) * np.log(1 - p_safe))
                if not np.isfinite(loss):
                    raise ContractViolation("non-finite classifier loss")
                epoch_loss += loss * len(idx)
                upstream = ((p_safe - yb) / (p_safe * (1 - p_safe)))[:, None] / len(idx)
                grad, _ = nn.backward(self.net, xb, upstream)
                nn.optim_step(self.opt, self.net, grad)
            losses.append(epoch_loss / len(x))
        return losses


def train_classifier(classifier, samples, epochs, rng, minibatch=256):
    """Fit the classifier to labeled mixture samples; returns the loss trace."""
    samples = list(samples)
    if not samples:
        raise ContractViolation("samples must be nonempty")
    thetas = np.stack([s.theta for s in samples])
    labels = np.array([s.label for s in samples], dtype=float)
    return classifier.train_on(thetas, labels, epochs, rng, minibatch=minibatch)


def train_policy_classifier(classifier, episodes, epochs, rng, minibatch=256):
    """Fit the current-policy safety probability from (theta, safe?) episodes."""
    episodes = list(episodes)
    if not episodes:
        return []
    pairs = [_episode_pair(e) for e in episodes]
    thetas = np.stack([np.asarray(t, dtype=float).reshape(-1) for t, _ in pairs])
    labels = np.array([float(s) for _, s in pairs])
    return classifier.train_on(thetas, labels, epochs, rng, minibatch=minibatch)


def classify(classifier, theta, beta):
    """Thresholded feasibility call: probability >= beta counts as feasible."""
    return bool(classifier.predict(np.atleast_2d(theta))[0] >= beta)


def sample_infeasible(classifier, base_sampler, beta, max_tries, rng):
    """Rejection-sample the base distribution for a classified-infeasible theta.

    Returns ``(theta, exhausted)``; after max_tries feasible-classified draws
    the last draw is returned with ``exhausted=True``.
    """
    if max_tries < 1:
        raise ContractViolation("max_tries must be >= 1")
    cand = base_sampler(rng, max_tries)
    probs = classifier.predict(cand)
    rejected = np.nonzero(probs < beta)[0]
    if len(rejected):
        return cand[rejected[0]].copy(), False
    return cand[-1].copy(), True


def exact_mixture_conditional(alpha, p_df, rho, p_star, p_pi):
    """Conditional feasibility probability of the mixture distribution.

    ``(alpha p_star p_df + (1-alpha) p_pi rho) / (alpha p_df + (1-alpha) rho)``
    with all densities nonnegative.  An infeasible theta has
    p_star = p_pi = 0 and the conditional is exactly 0.
    """
    for name, val in [("p_df", p_df), ("rho", rho), ("p_star", p_star), ("p_pi", p_pi)]:
        if val < 0:
            raise ContractViolation(f"{name} must be nonnegative")
    denom = alpha * p_df + (1.0 - alpha) * rho
    if denom == 0.0:
        raise ContractViolation("mixture density is zero at this theta")
    return (alpha * p_star * p_df + (1.0 - alpha) * p_pi * rho) / denom


def theorem1_threshold(alpha, beta, rho, p_df):
    """Minimum policy safety probability that guarantees classification.

    Returns ``beta - (1-beta) * (alpha p_df) / ((1-alpha) rho)``; any policy
    with p_pi at or above this value pushes the mixture conditional to beta.
    rho = 0 returns -inf (the parameter is always classified feasible).
    """
    if not (0.0 < alpha < 1.0 and 0.0 < beta < 1.0):
        raise ContractViolation("alpha, beta must be in (0, 1)")
    if p_df <= 0.0:
        raise ContractViolation("p_df must be positive")
    if rho == 0.0:
        return -np.inf
    return beta - (1.0 - beta) * (alpha * p_df) / ((1.0 - alpha) * rho)


@dataclass
class FixedPoint:
    """Self-consistent classifier error when the sampler is its own rejection."""

    q_cond: np.ndarray  # q_inf(f=0 | theta) per grid point
    q_marginal: float  # q_inf(f=0)


def fixed_point_error(alpha, p_df, p_base, p_pi_f0):
    """Closed-form fixed point of the coupled classifier/sampler update.

    On a discrete theta grid with base probabilities ``p_base`` (summing to
    one) and feasible-set probabilities ``p_df``, the limit is
    ``q(f=0|theta) = max(0, p_pi_f0 - alpha p_df E[p_pi_f0] / p_base)`` with
    marginal ``(1-alpha) E[p_pi_f0]``.
    """
    p_df = np.asarray(p_df, dtype=float)
    p_base = np.asarray(p_base, dtype=float)
    p_pi_f0 = np.asarray(p_pi_f0, dtype=float)
    if np.any(p_base <= 0.0):
        raise ContractViolation("base probability must be positive on the grid")
    marg = float(np.sum(p_pi_f0 * p_base))
    q_cond = np.maximum(0.0, p_pi_f0 - alpha * p_df * marg / p_base)
    return FixedPoint(q_cond=q_cond, q_marginal=(1.0 - alpha) * marg)


def fixed_point_iterate(alpha, p_df, p_base, p_pi_f0, iters=500):
    """Literal iteration of the coupled update map (oracle for the fixed point)."""
    p_df = np.asarray(p_df, dtype=float)
    p_base = np.asarray(p_base, dtype=float)
    q = np.asarray(p_pi_f0, dtype=float).copy()
    for _ in range(iters):
        marg = float(np.sum(q * p_base))
        if marg <= 0.0:
            return FixedPoint(q_cond=np.zeros_like(q), q_marginal=0.0)
        rho = q * p_base / marg
        q = p_pi_f0 * (1.0 - alpha) * rho / (alpha * p_df + (1.0 - alpha) * rho)
    return FixedPoint(q_cond=q, q_marginal=float(np.sum(q * p_base)))


def export_classifier_grid(classifier, bounds, resolution, path):
    """Write a CSV heatmap of classifier probabilities over a theta lattice."""
    bounds = np.asarray(bounds, dtype=float)
    axes = [np.linspace(lo, hi, resolution) for lo, hi in bounds]
    mesh = np.meshgrid(*axes, indexing="ij")
    grid = np.stack([m.ravel() for m in mesh], axis=1)
    probs = classifier.predict(grid)
    header = ",".join([f"theta{i}" for i in range(bounds.shape[0])] + ["prob"])
    data = np.column_stack([grid, probs])
    np.savetxt(path, data, delimiter=",", header=header, comments="")
    return grid, probs
