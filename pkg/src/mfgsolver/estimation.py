"""Expert-data pathway: trajectory simulation and plug-in estimators.

Each trajectory draws from its own counter-based RNG substream derived
from (seed, trajectory index), so the set of trajectories is independent
of generation order and reproducible bit-for-bit.
"""

from dataclasses import dataclass

import numpy as np

from .errors import EmptyData
from .model import check_simplex, feature_table, transition_kernel


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray
    actions: np.ndarray
    seed: int

    def __len__(self):
        return len(self.states)


@dataclass(frozen=True)
class EstimatorConfig:
    n_trajectories: int = 1
    horizon: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.n_trajectories < 1 or self.horizon < 1:
            raise ValueError("need at least one trajectory and one step")


def _sample_rows(cum_rows, u):
    """Vectorized categorical draw: one row of cumulative probabilities and
    one uniform per sample."""
    return (cum_rows < u[:, None]).sum(axis=1)


def simulate(spec, pi, mu, mu0, config):
    """Simulate trajectories of the frozen-mu chain under pi.

    x(0) ~ mu0, a(t) ~ pi(.|x(t)), x(t+1) ~ p(.|x(t), a(t), mu). All
    trajectories are stepped in lockstep but each consumes only its own
    substream.
    """
    pi = np.asarray(pi, dtype=float)
    mu0 = check_simplex(mu0, "mu0")
    p = transition_kernel(spec, mu)  # [y, x, a]
    d, T = config.n_trajectories, config.horizon

    # One uniform per (trajectory, step, draw); draw 0 picks the action,
    # draw 1 the next state, and one extra seeds the initial state.
    u = np.empty((d, 2 * T + 1))
    for i in range(d):
        rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(i,)))
        u[i] = rng.random(2 * T + 1)

    pi_cum = np.cumsum(pi, axis=1)
    # kernel_cum[x, a] is the cumulative distribution of the next state.
    kernel_cum = np.cumsum(np.transpose(p, (1, 2, 0)), axis=2)
    mu0_cum = np.cumsum(mu0)

    states = np.empty((d, T), dtype=np.int64)
    actions = np.empty((d, T), dtype=np.int64)
    x = (mu0_cum < u[:, 0][:, None]).sum(axis=1)
    for t in range(T):
        a = _sample_rows(pi_cum[x], u[:, 1 + 2 * t])
        states[:, t] = x
        actions[:, t] = a
        if t + 1 < T:
            x = _sample_rows(kernel_cum[x, a], u[:, 2 + 2 * t])
    return [
        Trajectory(states=states[i], actions=actions[i], seed=config.seed)
        for i in range(d)
    ]


def estimate_mean_field(trajectories, n_states=None):
    """Time-and-trajectory average of state visit indicators.

    n_states fixes the output length; it defaults to the largest state
    index seen in the data plus one.
    """
    if not trajectories:
        raise EmptyData("no trajectories")
    if n_states is None:
        n_states = int(max(t.states.max() for t in trajectories)) + 1
    counts = np.zeros(n_states)
    total = 0
    for t in trajectories:
        counts += np.bincount(t.states, minlength=n_states)
        total += len(t)
    return counts / total


def estimate_feature_expectation(spec, trajectories, mu_hat, beta):
    """Truncated discounted feature sum averaged over trajectories.

    Returns (estimate, tail_bound) where tail_bound is the worst-case mass
    beyond the simulation horizon, beta^T * max ||f|| / (1 - beta).
    """
    if not trajectories:
        raise EmptyData("no trajectories")
    f = feature_table(spec, mu_hat)  # [x, a, j]
    total = np.zeros(spec.feature_dim)
    for t in trajectories:
        discounts = beta ** np.arange(len(t))
        total += discounts @ f[t.states, t.actions]
    estimate = total / len(trajectories)
    T = max(len(t) for t in trajectories)
    f_max = float(np.linalg.norm(f, axis=2).max())
    tail = beta**T * f_max / (1.0 - beta)
    return estimate, tail
