"""Saddle-point finding on scalar games: GDA, FTRL + best response, metrics.

Orientation: throughout this module the first player maximizes the payoff
and the second player minimizes it, matching max over pi of min over theta.
The regret helper alone uses the minimization convention for the first
player (the literal sum difference), which is the form the sublinear-regret
bound is stated in.

Two analytic games ship with the module: the bilinear game pi * theta on
[-1, 1]^2, and a quartic-indicator game whose payoff is the (negated)
indicator that a quartic surface is positive; the latter exercises the
solver when convexity and exact best responses are both absent.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from avoidlab.errors import ContractViolation

DEFAULT_GRID_RESOLUTION = 2001
DEFAULT_ETA = 0.05


@dataclass
class ScalarGame:
    """Scalar two-player zero-sum game on a box.

    ``payoff(pi, theta)`` must broadcast over numpy arrays in either
    argument; ``grad_pi``, when present, is the payoff's derivative in the
    first argument and enables the averaged-gradient update.
    """

    payoff: callable
    pi_bounds: tuple = (-1.0, 1.0)
    theta_bounds: tuple = (-1.0, 1.0)
    grad_pi: callable = None
    grad_theta: callable = None


def bilinear_game(bound=1.0):
    """max over pi in [-b, b] of min over theta in [-b, b] of pi * theta."""
    return ScalarGame(
        payoff=lambda pi, theta: pi * theta,
        pi_bounds=(-bound, bound),
        theta_bounds=(-bound, bound),
        grad_pi=lambda pi, theta: np.broadcast_arrays(theta, pi)[0],
        grad_theta=lambda pi, theta: np.broadcast_arrays(pi, theta)[0],
    )


def quartic_h(pi, theta):
    """Quartic surface whose positive region the first player must escape."""
    pi = np.asarray(pi, dtype=float)
    theta = np.asarray(theta, dtype=float)
    return (
        -1296.0 * pi**4 + 36.0 * pi**2 - 216.0 * pi**2 * theta + 2592.0 * pi**3 * theta - 4.0
    )


def quartic_game():
    """Indicator game: the first player maximizes the negative indicator.

    Equivalently it minimizes the indicator that the quartic surface is
    positive while the adversary picks theta to keep it positive.
    """
    return ScalarGame(
        payoff=lambda pi, theta: -(quartic_h(pi, theta) > 0.0).astype(float),
        pi_bounds=(-1.0, 1.0),
        theta_bounds=(-1.0, 1.0),
        grad_pi=None,
    )


def quartic_solution_region(resolution=DEFAULT_GRID_RESOLUTION):
    """Grid mask of pi values safe against every theta (dense grid scan)."""
    pi_grid = np.linspace(-1.0, 1.0, resolution)
    theta_grid = np.linspace(-1.0, 1.0, resolution)
    max_h = quartic_h(pi_grid[:, None], theta_grid[None, :]).max(axis=1)
    return pi_grid, max_h <= 0.0


@dataclass
class FtrlState:
    """Iterate plus histories for follow-the-regularized-leader play.

    The step size is either a constant ``eta`` or the decreasing schedule
    ``eta_t = schedule_scale / sqrt(t)`` with ``schedule_scale`` standing in
    for alpha * sqrt(m) / L (regularizer strength and payoff Lipschitz
    constant fold into one scalar here).
    """

    pi: float
    eta: float = DEFAULT_ETA
    schedule_scale: float = None
    pi_history: list = field(default_factory=list)
    theta_history: list = field(default_factory=list)
    grid: np.ndarray = None
    grid_payoff_sum: np.ndarray = None

    @property
    def t(self):
        return len(self.theta_history)

    def eta_at(self, t):
        if self.schedule_scale is not None:
            return self.schedule_scale / np.sqrt(t)
        return self.eta


def gda_step(game, pi, theta, eta):
    """Simultaneous ascent in pi and descent in theta, projected to the box."""
    gp = _grad(game, pi, theta, wrt="pi")
    gt = _grad(game, pi, theta, wrt="theta")
    pi_new = float(np.clip(pi + eta * gp, *game.pi_bounds))
    theta_new = float(np.clip(theta - eta * gt, *game.theta_bounds))
    return pi_new, theta_new


def _grad(game, pi, theta, wrt, fd_step=1e-6):
    if wrt == "pi":
        if game.grad_pi is not None:
            return float(game.grad_pi(pi, theta))
        return float(
            (game.payoff(pi + fd_step, theta) - game.payoff(pi - fd_step, theta))
            / (2 * fd_step)
        )
    if game.grad_theta is not None:
        return float(game.grad_theta(pi, theta))
    return float(
        (game.payoff(pi, theta + fd_step) - game.payoff(pi, theta - fd_step)) / (2 * fd_step)
    )


def exact_best_response(game, resolution=DEFAULT_GRID_RESOLUTION):
    """Adversary oracle: grid argmin of the payoff over theta (first index ties)."""
    grid = np.linspace(*game.theta_bounds, resolution)

    def br(pi, rng=None):
        return float(grid[np.argmin(game.payoff(pi, grid))])

    return br


def sampled_best_response(game, n_samples):
    """Adversary oracle from n uniform draws: argmin payoff among the draws."""
    if n_samples < 1:
        raise ContractViolation("n_samples must be >= 1")
    lo, hi = game.theta_bounds

    def br(pi, rng):
        cand = rng.uniform(lo, hi, size=n_samples)
        return float(cand[np.argmin(game.payoff(pi, cand))])

    return br


def ftrl_br_step(game, state, br_oracle, rng=None, update="averaged-gradient",
                 grid_resolution=DEFAULT_GRID_RESOLUTION, grad_samples=None):
    """One round: adversary best-responds, then the leader updates.

    ``averaged-gradient``: the quadratic-proximal leader update collapses to
    a step along the history-averaged payoff gradient (needs a usable
    gradient).  ``grad_samples`` replaces that full history average with a
    Monte-Carlo estimate from that many uniform draws of past adversary
    moves (requires an rng); convergence then only holds with high
    probability and at a worse rate.  ``grid-argmin``: the literal
    regularizer-free leader - the grid argmax of the history-summed payoff -
    which is the only workable form for indicator payoffs (their gradient
    vanishes almost everywhere).
    """
    theta = br_oracle(state.pi, rng) if rng is not None else br_oracle(state.pi)
    state.theta_history.append(float(theta))
    t = state.t
    if update == "averaged-gradient":
        if grad_samples is None:
            hist = np.asarray(state.theta_history)
        else:
            if rng is None:
                raise ContractViolation("grad_samples needs an rng")
            idx = rng.integers(0, t, size=int(grad_samples))
            hist = np.asarray(state.theta_history)[idx]
        if game.grad_pi is not None:
            avg_grad = float(np.mean(game.grad_pi(state.pi, hist)))
        else:
            step = 1e-4
            avg_grad = float(
                (np.mean(game.payoff(state.pi + step, hist))
                 - np.mean(game.payoff(state.pi - step, hist))) / (2 * step)
            )
        state.pi = float(np.clip(state.pi + state.eta_at(t) * avg_grad, *game.pi_bounds))
    elif update == "grid-argmin":
        if state.grid is None:
            state.grid = np.linspace(*game.pi_bounds, grid_resolution)
            state.grid_payoff_sum = np.zeros(grid_resolution)
        state.grid_payoff_sum += game.payoff(state.grid, theta)
        state.pi = float(state.grid[np.argmax(state.grid_payoff_sum)])
    else:
        raise ContractViolation(f"unknown update {update!r}")
    state.pi_history.append(state.pi)
    return state


def duality_gap(game, pi, theta, resolution=DEFAULT_GRID_RESOLUTION):
    """Grid-extremized gap max_pi J(pi, theta) - min_theta J(pi_bar, theta)."""
    if resolution < 2:
        raise ContractViolation("resolution must be >= 2")
    pi_grid = np.linspace(*game.pi_bounds, resolution)
    theta_grid = np.linspace(*game.theta_bounds, resolution)
    best_pi = float(np.max(game.payoff(pi_grid, theta)))
    worst_theta = float(np.min(game.payoff(pi, theta_grid)))
    return best_pi - worst_theta


def regret(game, history, comparator):
    """Literal minimization-orientation regret of the played first-player sequence.

    ``sum_t J(pi_t, theta_t) - sum_t J(comparator, theta_t)`` over the given
    history of (pi_t, theta_t) pairs.
    """
    history = list(history)
    if not history:
        raise ContractViolation("history must be nonempty")
    pis = np.array([p for p, _ in history])
    thetas = np.array([th for _, th in history])
    return float(np.sum(game.payoff(pis, thetas)) - np.sum(game.payoff(comparator, thetas)))


@dataclass
class SaddleTrace:
    pi: np.ndarray
    theta: np.ndarray
    pi_avg: np.ndarray
    theta_avg: np.ndarray
    gap: np.ndarray  # duality gap of the running averages, at every step


def run_ftrl_bilinear(steps, eta=DEFAULT_ETA, schedule_scale=None, pi0=0.5,
                      br="exact", n_samples=1, grad_samples=None, seed=0):
    """Bilinear-game experiment: FTRL + best response, with running averages.

    ``grad_samples=1`` reproduces the single-sample approximation of the
    history expectation (exact best response retained).
    """
    game = bilinear_game()
    state = FtrlState(pi=pi0, eta=eta, schedule_scale=schedule_scale)
    rng = np.random.default_rng(seed) if (br == "sampled" or grad_samples) else None
    if br == "exact":
        oracle = exact_best_response(game)
        if rng is not None:
            exact = oracle
            oracle = lambda pi, rng=None: exact(pi)
    elif br == "sampled":
        oracle = sampled_best_response(game, n_samples)
    else:
        raise ContractViolation(f"unknown best-response kind {br!r}")
    for _ in range(steps):
        ftrl_br_step(game, state, oracle, rng=rng, update="averaged-gradient",
                     grad_samples=grad_samples)
    pis = np.array(state.pi_history)
    thetas = np.array(state.theta_history)
    pi_avg = np.cumsum(pis) / np.arange(1, steps + 1)
    theta_avg = np.cumsum(thetas) / np.arange(1, steps + 1)
    # closed-form extremization of pi*theta on the box keeps the trace cheap
    gap = np.abs(pi_avg) + np.abs(theta_avg)
    return SaddleTrace(pi=pis, theta=thetas, pi_avg=pi_avg, theta_avg=theta_avg, gap=gap)


def run_gda_bilinear(steps, eta=DEFAULT_ETA, start=(0.5, 0.5), bound=1.0):
    """GDA on the bilinear game; returns the (pi_t, theta_t) trajectory."""
    game = bilinear_game(bound=bound)
    pi, theta = start
    out = np.empty((steps + 1, 2))
    out[0] = (pi, theta)
    for t in range(1, steps + 1):
        pi, theta = gda_step(game, pi, theta, eta)
        out[t] = (pi, theta)
    return out


def gap_loglog_slope(trace, t_lo=100, t_hi=10_000, n_points=25):
    """Least-squares slope of log(gap) against log(t) at log-spaced times."""
    ts = np.unique(np.logspace(np.log10(t_lo), np.log10(t_hi), n_points).astype(int))
    ts = ts[ts <= len(trace.gap)]
    gaps = np.maximum(trace.gap[ts - 1], 1e-12)
    return float(np.polyfit(np.log(ts), np.log(gaps), 1)[0])


@dataclass
class QuarticSensitivityResult:
    medians: dict  # n_samples -> median iterations to converge
    iterations: dict  # n_samples -> list of per-trial iteration counts
    cap: int
    any_capped: bool


def quartic_sensitivity(n_samples_list, trials, rng, cap=2000,
                        resolution=DEFAULT_GRID_RESOLUTION, pi0=0.5):
    """Iterations until the leader's iterate enters the quartic solution region.

    Runs FTRL (grid-argmin leader) against a sampled best response with each
    sample count; a trial that fails to converge within the cap is recorded
    at the cap.
    """
    game = quartic_game()
    pi_grid, solution = quartic_solution_region(resolution)
    if not solution.any():
        raise ContractViolation("empty solution region; check the payoff")
    iterations = {}
    for n in n_samples_list:
        oracle = sampled_best_response(game, n)
        counts = []
        for _ in range(trials):
            state = FtrlState(pi=pi0)
            state.grid = pi_grid
            state.grid_payoff_sum = np.zeros(resolution)
            converged_at = cap
            for t in range(1, cap + 1):
                ftrl_br_step(game, state, oracle, rng=rng, update="grid-argmin",
                             grid_resolution=resolution)
                if solution[np.argmax(state.grid_payoff_sum)]:
                    converged_at = t
                    break
            counts.append(converged_at)
        iterations[int(n)] = counts
    medians = {n: float(np.median(c)) for n, c in iterations.items()}
    any_capped = any(c >= cap for counts in iterations.values() for c in counts)
    return QuarticSensitivityResult(
        medians=medians, iterations=iterations, cap=cap, any_capped=any_capped
    )


def write_trace_csv(path, trace, game=None, comparator=0.0, every=1):
    """Per-iteration trace (pi_t, theta_t, gap_t, regret_t) as CSV."""
    game = bilinear_game() if game is None else game
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "pi", "theta", "pi_avg", "theta_avg", "gap", "regret"])
        running = 0.0
        for i in range(len(trace.pi)):
            running += float(
                game.payoff(trace.pi[i], trace.theta[i])
                - game.payoff(comparator, trace.theta[i])
            )
            if (i + 1) % every == 0:
                writer.writerow(
                    [i + 1, trace.pi[i], trace.theta[i], trace.pi_avg[i],
                     trace.theta_avg[i], trace.gap[i], running]
                )
