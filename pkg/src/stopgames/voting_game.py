"""Non-cooperative stopping of a Markov chain by voting.

p players watch a common finite Markov chain.  At every stage each
player declares stop or continue; a simple game aggregates the
declarations, and the process halts at the first stage whose yes-voters
form a winning coalition.  Player i is then paid their own utility f_i
at the halted state.  If the run reaches the horizon it is cut off
there and everyone is paid at the final state (at the last stage all
players declare stop, so the aggregated decision is stop).

`solve_finite` computes a Nash equilibrium in state-feedback stopping
strategies by backward induction.  With n stages left, let v' be the
(n-1)-stage value vector and give every player j the provisional
stopping set {f_j >= v'_j}.  Whether player i's own vote matters at a
state y depends only on the aggregated decision with i's vote forced to
yes resp. no; by monotonicity of the rule there are three cases:

    stops either way   ->  f_i(y)
    stops only on yes  ->  max(f_i(y), v'_i(y))    (i is pivotal)
    stops neither way  ->  v'_i(y)

The stage value below writes this with positive/negative parts,
(f-v')^+ on the forced-yes stop region minus (f-v')^- on the forced-no
stop region plus v', and the new value is its one-step expectation.
The provisional sets are the equilibrium stopping sets of that stage.
No player can gain by a unilateral deviation: given the others' sets,
player i faces a plain Markov decision problem whose optimum is
attained by exactly these sets (`deviation_gap` certifies this).

`solve_infinite` iterates the same one-stage operator to a fixed point,
starting from the immediate-stop values f; convergence is verified by
the sup-norm residual, never assumed.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .markov import MarkovChain
from .simple_game import SimpleGame

ENUMERATION_GUARD = 10**7


class TooManyDeviations(ValueError):
    """Exhaustive deviation enumeration was requested but is infeasible."""


class NotConverged(RuntimeError):
    """Value iteration did not reach the residual tolerance."""

    def __init__(self, message: str, residual_history, partial=None):
        super().__init__(message)
        self.residual_history = tuple(residual_history)
        self.partial = partial


@dataclass(frozen=True)
class GameSpec:
    """Chain, per-player utilities (p x S), aggregation rule, horizon.

    horizon is a stage count N >= 0, or None for the infinite game.
    Utilities must be finite, which on a finite state space settles
    every integrability requirement.
    """

    chain: MarkovChain
    utilities: np.ndarray
    game: SimpleGame
    horizon: Optional[int] = None

    def __post_init__(self):
        f = np.asarray(self.utilities, dtype=float)
        expected = (self.game.p, self.chain.n_states)
        if f.shape != expected:
            raise ValueError(f"utilities must have shape {expected}, got {f.shape}")
        if not np.all(np.isfinite(f)):
            raise ValueError("utilities must be finite")
        f = f.copy()
        f.flags.writeable = False
        object.__setattr__(self, "utilities", f)
        if self.horizon is not None and self.horizon < 0:
            raise ValueError("horizon must be >= 0 or None")

    @property
    def n_players(self) -> int:
        return self.game.p

    @property
    def n_states(self) -> int:
        return self.chain.n_states


@dataclass(frozen=True)
class StoppingProfile:
    """Per-stage, per-player stopping sets.

    stop[n-1, i, x] is True when player i declares stop at stage n in
    state x; the induced declaration is a function of the current state
    only.
    """

    stop: np.ndarray

    def __post_init__(self):
        mask = np.asarray(self.stop, dtype=bool)
        if mask.ndim != 3:
            raise ValueError("stop mask must be (stages, players, states)")
        mask = mask.copy()
        mask.flags.writeable = False
        object.__setattr__(self, "stop", mask)

    @property
    def n_stages(self) -> int:
        return self.stop.shape[0]

    @classmethod
    def everywhere(cls, n_stages: int, n_players: int, n_states: int) -> "StoppingProfile":
        return cls(np.ones((n_stages, n_players, n_states), dtype=bool))

    @classmethod
    def nowhere(cls, n_stages: int, n_players: int, n_states: int) -> "StoppingProfile":
        return cls(np.zeros((n_stages, n_players, n_states), dtype=bool))

    @classmethod
    def from_sets(cls, sets, n_players: int, n_states: int) -> "StoppingProfile":
        """sets[n][i] is an iterable of state indices where player i+1 stops
        at stage n+1."""
        mask = np.zeros((len(sets), n_players, n_states), dtype=bool)
        for n, stage in enumerate(sets):
            if len(stage) != n_players:
                raise ValueError(f"stage {n + 1} lists {len(stage)} players")
            for i, states in enumerate(stage):
                for x in states:
                    mask[n, i, x] = True
        return cls(mask)


@dataclass(frozen=True)
class EquilibriumSolution:
    """values[i, n] is player i's equilibrium value with n stages to go;
    profile holds the equilibrium stopping sets for stages 1..N."""

    values: np.ndarray
    profile: StoppingProfile
    stop_time_dist: Optional["StopTimeDistribution"] = None

    @property
    def horizon(self) -> int:
        return self.values.shape[1] - 1


@dataclass(frozen=True)
class StopTimeDistribution:
    """Exact distribution of the aggregated stopping stage from a start
    state; `never` is the mass on runs that reach the horizon without the
    rule ever firing (paid at the final state)."""

    by_stage: np.ndarray
    never: float


@dataclass(frozen=True)
class InfiniteSolution:
    values: np.ndarray
    stop: np.ndarray
    residual: float
    iterations: int
    converged: bool
    residual_history: tuple


def _vote_masks(stop_sets: np.ndarray) -> np.ndarray:
    """Pack per-player stop indicators (p, S) into per-state vote bitmasks."""
    p, n_states = stop_sets.shape
    masks = np.zeros(n_states, dtype=np.int64)
    for j in range(p):
        masks |= stop_sets[j].astype(np.int64) << j
    return masks


def _stage_step(P, f, win_table, v_prev):
    """One backward-induction sweep; returns (next values, stop sets)."""
    sets = f >= v_prev
    masks = _vote_masks(sets)
    v_next = np.empty_like(v_prev)
    for i in range(f.shape[0]):
        bit = np.int64(1 << i)
        stop_if_yes = win_table[masks | bit]
        stop_if_no = win_table[masks & ~bit]
        diff = f[i] - v_prev[i]
        inner = (
            np.where(stop_if_yes, np.maximum(diff, 0.0), 0.0)
            - np.where(stop_if_no, np.maximum(-diff, 0.0), 0.0)
            + v_prev[i]
        )
        v_next[i] = P @ inner
    return v_next, sets


def solve_finite(spec: GameSpec, x0: Optional[int] = None) -> EquilibriumSolution:
    """Backward-induction equilibrium of the N-stage game.

    If `x0` is given the exact stop-time distribution under the
    equilibrium profile is attached as a diagnostic.
    """
    if spec.horizon is None:
        raise ValueError("solve_finite needs a finite horizon")
    n = spec.horizon
    p, n_states = spec.n_players, spec.n_states
    P = spec.chain.transition
    f = spec.utilities
    win_table = spec.game.winning_table()

    values = np.empty((p, n + 1, n_states))
    values[:, 0, :] = f
    stage_sets = np.empty((n, p, n_states), dtype=bool)
    for k in range(1, n + 1):
        v_next, sets = _stage_step(P, f, win_table, values[:, k - 1, :])
        values[:, k, :] = v_next
        # sets computed from the (k-1)-stage values govern the stage
        # with k steps to go, i.e. stage N-k+1.
        stage_sets[n - k] = sets
    profile = StoppingProfile(stage_sets)
    dist = None
    if x0 is not None and n > 0:
        dist = stop_time_distribution(spec, profile, x0)
    return EquilibriumSolution(values=values, profile=profile, stop_time_dist=dist)


def stop_time(profile: StoppingProfile, game: SimpleGame, path) -> Optional[int]:
    """First stage whose votes along `path` aggregate to stop, else None."""
    n = profile.n_stages
    if len(path) < n + 1:
        raise ValueError(f"path must cover {n + 1} states, got {len(path)}")
    for stage in range(1, n + 1):
        votes = profile.stop[stage - 1, :, path[stage]]
        if game.is_winning(game.vote_mask(votes.tolist())):
            return stage
    return None


def _group_stop_flags(profile: StoppingProfile, game: SimpleGame, stage: int) -> np.ndarray:
    win_table = game.winning_table()
    return win_table[_vote_masks(profile.stop[stage - 1])]


def evaluate_profile(spec: GameSpec, profile: StoppingProfile, x0: int) -> np.ndarray:
    """Exact expected payoffs of a profile, by stage-state dynamic programming.

    Runs that never trigger the rule are paid at the horizon state.
    """
    if spec.horizon is None or profile.n_stages != spec.horizon:
        raise ValueError("profile stages must match the spec horizon")
    n = spec.horizon
    P = spec.chain.transition
    f = spec.utilities
    if n == 0:
        return f[:, x0].copy()
    payoff = f.copy()  # stage N: paid at the final state regardless of votes
    for stage in range(n - 1, 0, -1):
        stops = _group_stop_flags(profile, spec.game, stage)
        cont = payoff @ P.T
        payoff = np.where(stops[np.newaxis, :], f, cont)
    return payoff @ P[x0]


def stop_time_distribution(
    spec: GameSpec, profile: StoppingProfile, x0: int
) -> StopTimeDistribution:
    """Exact law of the aggregated stop stage from x0 under `profile`."""
    n = spec.horizon
    if n is None or profile.n_stages != n:
        raise ValueError("profile stages must match the spec horizon")
    P = spec.chain.transition
    by_stage = np.zeros(n + 1)
    alive = np.zeros(spec.n_states)
    alive[x0] = 1.0
    for stage in range(1, n + 1):
        alive = alive @ P
        stops = _group_stop_flags(profile, spec.game, stage)
        by_stage[stage] = float(alive[stops].sum())
        alive = np.where(stops, 0.0, alive)
    return StopTimeDistribution(by_stage=by_stage, never=float(alive.sum()))


def _best_response_value(spec: GameSpec, profile: StoppingProfile, x0: int, i: int) -> float:
    """Optimal payoff of player i against the others' fixed sets.

    With the opponents playing state-feedback sets, player i faces a
    Markov decision problem over (stage, state); its optimum therefore
    bounds every adapted deviation, not just state-feedback ones.
    """
    n = spec.horizon
    P = spec.chain.transition
    f_i = spec.utilities[i]
    if n == 0:
        return float(f_i[x0])
    win_table = spec.game.winning_table()
    bit = np.int64(1 << i)
    best = f_i.copy()  # stage N
    for stage in range(n - 1, 0, -1):
        others = profile.stop[stage - 1].copy()
        others[i] = False
        masks = _vote_masks(others) & ~bit
        stop_if_yes = win_table[masks | bit]
        stop_if_no = win_table[masks]
        cont = P @ best
        option_yes = np.where(stop_if_yes, f_i, cont)
        option_no = np.where(stop_if_no, f_i, cont)
        best = np.maximum(option_yes, option_no)
    return float(P[x0] @ best)


def _enumerated_best(spec: GameSpec, profile: StoppingProfile, x0: int, i: int) -> float:
    n, n_states = spec.horizon, spec.n_states
    best = -np.inf
    all_sets = list(itertools.product([False, True], repeat=n_states))
    for stages in itertools.product(all_sets, repeat=n):
        deviated = profile.stop.copy()
        for stage in range(n):
            deviated[stage, i, :] = stages[stage]
        payoff = evaluate_profile(spec, StoppingProfile(deviated), x0)[i]
        best = max(best, float(payoff))
    return best


def deviation_gap(
    spec: GameSpec, profile: StoppingProfile, x0: int, method: str = "best-response"
) -> np.ndarray:
    """Max unilateral gain per player over state-feedback deviations.

    `method="best-response"` solves each player's deviation MDP exactly;
    `method="enumerate"` brute-forces every per-stage set sequence and is
    guarded against explosion.
    """
    if spec.horizon is None:
        raise ValueError("deviation_gap needs a finite horizon")
    if method not in ("best-response", "enumerate"):
        raise ValueError(f"unknown method {method!r}")
    base = evaluate_profile(spec, profile, x0)
    if method == "enumerate":
        candidates = spec.n_players * (2**spec.n_states) ** spec.horizon
        if candidates > ENUMERATION_GUARD:
            raise TooManyDeviations(
                f"{candidates} deviation candidates exceed the {ENUMERATION_GUARD} guard"
            )
        best = [_enumerated_best(spec, profile, x0, i) for i in range(spec.n_players)]
    else:
        best = [_best_response_value(spec, profile, x0, i) for i in range(spec.n_players)]
    return np.asarray(best) - base


def solve_infinite(
    spec: GameSpec,
    tol: float = 1e-10,
    max_iter: int = 10_000,
    on_fail: str = "raise",
) -> InfiniteSolution:
    """Fixed point of the one-stage operator by value iteration from f.

    After k iterations the iterate equals the k-stage finite-horizon
    value, so a converged result is the long-horizon limit.  On
    non-convergence the default is to raise NotConverged (with the
    residual history and the partial solution attached); pass
    on_fail="return" to get the unconverged iterate back for diagnosis.
    """
    if spec.horizon is not None:
        raise ValueError("solve_infinite requires horizon=None")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if on_fail not in ("raise", "return"):
        raise ValueError(f"unknown on_fail {on_fail!r}")
    P = spec.chain.transition
    f = spec.utilities
    win_table = spec.game.winning_table()

    w = f.copy()
    history = []
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        w_next, _ = _stage_step(P, f, win_table, w)
        residual = float(np.max(np.abs(w_next - w)))
        history.append(residual)
        w = w_next
        if residual < tol:
            converged = True
            break
    solution = InfiniteSolution(
        values=w,
        stop=f >= w,
        residual=history[-1],
        iterations=iterations,
        converged=converged,
        residual_history=tuple(history),
    )
    if not converged and on_fail == "raise":
        raise NotConverged(
            f"residual {history[-1]:.3e} after {iterations} iterations (tol {tol:g})",
            history,
            partial=solution,
        )
    return solution


def value_table_rows(solution: EquilibriumSolution, chain: MarkovChain) -> list:
    """Rows (player, steps_to_go, state, value, stops) for the value table.

    At steps_to_go n >= 1 the stops flag reads the equilibrium set of the
    stage with n steps left; at n = 0 everyone stops by construction.
    """
    n = solution.horizon
    rows = []
    for i in range(solution.values.shape[0]):
        for steps in range(n + 1):
            if steps == 0:
                stops = np.ones(chain.n_states, dtype=bool)
            else:
                stops = solution.profile.stop[n - steps, i]
            for x, label in enumerate(chain.states):
                rows.append(
                    (i + 1, steps, label, float(solution.values[i, steps, x]), int(stops[x]))
                )
    return rows


def infinite_table_rows(solution: InfiniteSolution, chain: MarkovChain) -> list:
    rows = []
    for i in range(solution.values.shape[0]):
        for x, label in enumerate(chain.states):
            rows.append(
                (i + 1, "inf", label, float(solution.values[i, x]), int(solution.stop[i, x]))
            )
    return rows
