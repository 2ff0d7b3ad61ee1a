"""Bayesian disorder (change-point) detection for one sensor.

The sensor watches a chain on a finite observation alphabet.  Up to an
unobserved moment theta the transitions follow the pre-change kernel
F0; from theta on they follow the post-change kernel F1 (the step into
X_theta is already a post-change transition, continuing from the state
reached before the change).  theta is geometric: P(theta = j) =
(1-q)^(j-1) q for j >= 1, so conditional on no change yet, the next
step changes with hazard q.

The detector keeps the posterior of the change given the observations:
Pi = P(change already happened) and, for the window payoff, the exact
lag masses P(change happened exactly k steps ago) for k = 0..d.  After
seeing a transition a -> b the Bayes update weighs the one-step prior
Pi + (1-Pi) q by the post-change likelihood F1(a, b) against the
no-change mass (1-Pi)(1-q) weighted by F0(a, b):

    Pi'        = (Pi + (1-Pi) q) F1(a,b) / D
    lag'[0]    = (1-Pi) q F1(a,b) / D
    lag'[k]    = lag[k-1] F1(a,b) / D          (the change stays put)
    D          = (Pi + (1-Pi) q) F1(a,b) + (1-Pi)(1-q) F0(a,b)

Stopping at time n is rewarded by the probability that the change lies
within d steps of n.  Mass already accrued is read off the lag vector;
mass on a change in the next d steps is (1-Pi)(1 - (1-q)^d) by the
memorylessness of the geometric prior.  This makes the reward a pure
function of the posterior state, so the optimal alarm is an optimal
stopping problem on the posterior, discretized here onto a uniform grid
per coordinate (`build_detection_chain`) and handed to the game solver.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .markov import MarkovChain, validate_transition_matrix
from .rng import as_generator, sample_index, substream

CHAIN_SIZE_GUARD = 10**6


class ZeroLikelihood(ValueError):
    """An observation is impossible under both regimes."""


class GridTooLarge(ValueError):
    """The discretized posterior chain would exceed the size guard."""


@dataclass(frozen=True)
class DisorderModel:
    """Observation alphabet, pre/post-change kernels, change hazard q,
    detection window d, and the initial observation."""

    obs_states: tuple
    pre_change: np.ndarray
    post_change: np.ndarray
    hazard: float
    window: int
    start: object

    def __post_init__(self):
        labels = tuple(self.obs_states)
        if len(set(labels)) != len(labels):
            raise ValueError("observation labels must be unique")
        f0 = validate_transition_matrix(self.pre_change)
        f1 = validate_transition_matrix(self.post_change)
        if f0.shape[0] != len(labels) or f1.shape[0] != len(labels):
            raise ValueError("kernel sizes must match the alphabet")
        if not 0.0 < self.hazard < 1.0:
            raise ValueError(f"hazard must lie in (0, 1), got {self.hazard}")
        if self.window < 0:
            raise ValueError("window must be >= 0")
        if labels.count(self.start) != 1:
            raise ValueError(f"unknown start state {self.start!r}")
        f0.flags.writeable = False
        f1.flags.writeable = False
        object.__setattr__(self, "obs_states", labels)
        object.__setattr__(self, "pre_change", f0)
        object.__setattr__(self, "post_change", f1)

    @property
    def n_obs(self) -> int:
        return len(self.obs_states)

    def index(self, label) -> int:
        return self.obs_states.index(label)


@dataclass(frozen=True)
class PosteriorState:
    """prev_obs: last observation index; lag_probs[k]: posterior mass on a
    change exactly k steps ago (k = 0..d); change_prob: posterior mass on
    the change having happened at all."""

    prev_obs: int
    lag_probs: tuple
    change_prob: float


def initial_posterior(model: DisorderModel) -> PosteriorState:
    """Detector state before any observation: no change seen, mass zero."""
    return PosteriorState(
        prev_obs=model.index(model.start),
        lag_probs=(0.0,) * (model.window + 1),
        change_prob=0.0,
    )


def posterior_step(model: DisorderModel, state: PosteriorState, new_obs: int) -> PosteriorState:
    """Bayes update for one observed transition; see the module docstring."""
    a, b = state.prev_obs, new_obs
    q = model.hazard
    pi = state.change_prob
    like1 = model.post_change[a, b]
    like0 = model.pre_change[a, b]
    changed = (pi + (1.0 - pi) * q) * like1
    unchanged = (1.0 - pi) * (1.0 - q) * like0
    denom = changed + unchanged
    if denom == 0.0:
        raise ZeroLikelihood(
            f"transition {model.obs_states[a]!r} -> {model.obs_states[b]!r} "
            "is impossible under both regimes"
        )
    lag = [(1.0 - pi) * q * like1 / denom]
    lag.extend(state.lag_probs[k - 1] * like1 / denom for k in range(1, model.window + 1))
    return PosteriorState(prev_obs=b, lag_probs=tuple(lag), change_prob=changed / denom)


def window_payoff(model: DisorderModel, state: PosteriorState) -> float:
    """Probability that stopping now lands within d steps of the change."""
    future = (1.0 - state.change_prob) * (1.0 - (1.0 - model.hazard) ** model.window)
    return float(sum(state.lag_probs) + future)


def simulate_disorder(model: DisorderModel, horizon: int, seed) -> tuple[np.ndarray, int]:
    """Draw (observation index path of length horizon+1, change time theta)."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    rng = as_generator(seed)
    p = 1.0 - model.hazard
    u = rng.random()
    theta = max(1, math.ceil(math.log1p(-u) / math.log(p)))
    path = np.empty(horizon + 1, dtype=np.int64)
    current = model.index(model.start)
    path[0] = current
    for n in range(1, horizon + 1):
        kernel = model.post_change if n >= theta else model.pre_change
        current = sample_index(rng, kernel[current])
        path[n] = current
    return path, theta


def threshold_policy(level: float) -> Callable[[PosteriorState], bool]:
    """Stop as soon as the posterior change probability reaches `level`."""

    def policy(state: PosteriorState) -> bool:
        return state.change_prob >= level

    return policy


class MCEstimate(NamedTuple):
    estimate: float
    stderr: float
    reps: int


def evaluate_policy_mc(
    model: DisorderModel, policy, horizon: int, reps: int, seed: int
) -> MCEstimate:
    """Monte Carlo detection probability of a posterior-fed stop policy.

    The policy is polled after every observation; a run that never stops
    is stopped at the horizon (pick the horizon so the change is almost
    surely inside it).  Replication r draws from substream(seed, r).
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    hits = np.empty(reps)
    for r in range(reps):
        rng = substream(seed, r)
        path, theta = simulate_disorder(model, horizon, rng)
        state = initial_posterior(model)
        tau = horizon
        for n in range(1, horizon + 1):
            state = posterior_step(model, state, int(path[n]))
            if policy(state):
                tau = n
                break
        hits[r] = 1.0 if abs(theta - tau) <= model.window else 0.0
    estimate = float(hits.mean())
    spread = float(hits.std(ddof=1)) if reps > 1 else 0.0
    return MCEstimate(estimate, spread / math.sqrt(reps), reps)


@dataclass(frozen=True)
class DetectionChain:
    """Posterior dynamics discretized to a finite chain.

    States are (observation index, lag grid indices, change-prob grid
    index); grid index k encodes the value k/(grid_size-1).  `utility`
    is the window payoff per state, so (chain, utility) feed directly
    into the stopping-game solver.
    """

    chain: MarkovChain
    utility: np.ndarray
    model: DisorderModel
    grid_size: int

    def __post_init__(self):
        lookup = {key: idx for idx, key in enumerate(self.chain.states)}
        object.__setattr__(self, "_lookup", lookup)

    @property
    def n_states(self) -> int:
        return self.chain.n_states

    @property
    def initial_index(self) -> int:
        key = (self.model.index(self.model.start), (0,) * (self.model.window + 1), 0)
        return self._lookup[key]

    def snap_key(self, state: PosteriorState) -> tuple:
        return _snap_key(self.grid_size, state)

    def snap_index(self, state: PosteriorState) -> int:
        return self._lookup[self.snap_key(state)]


def _nearest(value: float, steps: int) -> int:
    idx = int(math.floor(value * steps + 0.5))
    return min(max(idx, 0), steps)


def _snap_key(grid_size: int, state: PosteriorState) -> tuple:
    steps = grid_size - 1
    pi_idx = _nearest(state.change_prob, steps)
    lag_idx = [_nearest(v, steps) for v in state.lag_probs]
    total = sum(lag_idx)
    if total > pi_idx:
        # project back into the valid region, staying on the grid:
        # integer floor of the proportional rescale keeps sum <= pi_idx
        lag_idx = [k * pi_idx // total for k in lag_idx]
    return (state.prev_obs, tuple(lag_idx), pi_idx)


def build_detection_chain(model: DisorderModel, grid_size: int) -> DetectionChain:
    """Discretize the posterior recursion onto a uniform grid.

    Each posterior coordinate is snapped to the nearest of grid_size
    points on [0, 1] (with a projection keeping sum(lags) <= Pi, which
    holds exactly in grid-index arithmetic).  The observation symbol is
    drawn from its exact predictive mixture, so rows stay stochastic.
    State count grows like n_obs * grid_size^(d+2); memory for the dense
    matrix is quadratic in that, so keep grids small for d > 0.
    """
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    d = model.window
    count = model.n_obs * math.comb(grid_size + d + 1, d + 2)
    if count > CHAIN_SIZE_GUARD:
        raise GridTooLarge(f"{count} states exceed the {CHAIN_SIZE_GUARD} guard")

    steps = grid_size - 1
    keys = []
    for a in range(model.n_obs):
        for lags in itertools.product(range(grid_size), repeat=d + 1):
            total = sum(lags)
            if total > steps:
                continue
            for pi_idx in range(total, grid_size):
                keys.append((a, lags, pi_idx))
    lookup = {key: idx for idx, key in enumerate(keys)}

    q = model.hazard
    transition = np.zeros((len(keys), len(keys)))
    utility = np.empty(len(keys))
    for idx, (a, lags, pi_idx) in enumerate(keys):
        pi = pi_idx / steps
        lag_vals = tuple(k / steps for k in lags)
        here = PosteriorState(prev_obs=a, lag_probs=lag_vals, change_prob=pi)
        utility[idx] = window_payoff(model, here)
        for b in range(model.n_obs):
            like1 = model.post_change[a, b]
            like0 = model.pre_change[a, b]
            changed = (pi + (1.0 - pi) * q) * like1
            unchanged = (1.0 - pi) * (1.0 - q) * like0
            weight = changed + unchanged
            if weight <= 0.0:
                continue
            lag = [(1.0 - pi) * q * like1 / weight]
            lag.extend(lag_vals[k - 1] * like1 / weight for k in range(1, d + 1))
            target = PosteriorState(
                prev_obs=b, lag_probs=tuple(lag), change_prob=changed / weight
            )
            transition[idx, lookup[_snap_key(grid_size, target)]] += weight

    chain = MarkovChain(tuple(keys), transition)
    return DetectionChain(chain=chain, utility=utility, model=model, grid_size=grid_size)
