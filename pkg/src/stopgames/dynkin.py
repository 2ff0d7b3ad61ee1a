"""Two-player zero-sum stopping (Dynkin) game with randomized stopping.

Both players watch the same Markov chain and may stop at any decision
epoch.  Payoffs are state functions: gX if only player 1 stops, gW if
both stop at once, gY if only player 2 stops; player 1 maximizes,
player 2 minimizes.  Each epoch is a 2x2 zero-sum matrix game

        rows = player 1 {stop, continue}, columns = player 2 {stop, continue}
        [[ gW(x)  gX(x) ]
         [ gY(x)  cont  ]]       cont = one-step expectation of the next value

solved in pure strategies when a saddle point exists and by the 2x2
mixed closed form otherwise, which is what makes the game solvable
without any ordering of the three payoffs.  When gX <= gW <= gY holds
pointwise every epoch game has a pure saddle and the randomization is
degenerate.

Epochs run at states X_0 .. X_N; at the final epoch both players are
forced to stop, so the terminal value is gW.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .markov import MarkovChain


@dataclass(frozen=True)
class PayoffTriple:
    """State payoffs for (player-1-stops, both-stop, player-2-stops)."""

    only_p1: np.ndarray
    both: np.ndarray
    only_p2: np.ndarray

    def __post_init__(self):
        arrays = {}
        size = None
        for name in ("only_p1", "both", "only_p2"):
            g = np.asarray(getattr(self, name), dtype=float)
            if g.ndim != 1 or not np.all(np.isfinite(g)):
                raise ValueError(f"{name} must be a finite vector")
            if size is None:
                size = g.size
            elif g.size != size:
                raise ValueError("payoff vectors must share one length")
            g = g.copy()
            g.flags.writeable = False
            arrays[name] = g
        for name, g in arrays.items():
            object.__setattr__(self, name, g)

    @property
    def neveu_ordered(self) -> bool:
        return bool(np.all(self.only_p1 <= self.both) and np.all(self.both <= self.only_p2))


def check_neveu(triple: PayoffTriple) -> tuple[bool, Optional[int]]:
    """Pointwise ordering only_p1 <= both <= only_p2; returns a witness
    state index on failure."""
    bad = np.nonzero((triple.only_p1 > triple.both) | (triple.both > triple.only_p2))[0]
    if bad.size:
        return False, int(bad[0])
    return True, None


class StageOutcome(NamedTuple):
    value: float
    p1_stop: float
    p2_stop: float
    pure: bool


def stage_value(a11: float, a12: float, a21: float, a22: float) -> StageOutcome:
    """Value and stop probabilities of one 2x2 epoch game.

    Prefers a pure saddle, tie-broken to the lexicographically smallest
    (row, column) action pair with stop ordered before continue; otherwise
    returns the mixed closed form (the denominator cannot vanish when no
    saddle exists).
    """
    a = ((a11, a12), (a21, a22))
    for i in (0, 1):
        for j in (0, 1):
            row_best = a[i][j] >= a[1 - i][j]
            col_best = a[i][j] <= a[i][1 - j]
            if row_best and col_best:
                return StageOutcome(a[i][j], 1.0 - i, 1.0 - j, True)
    denom = a11 + a22 - a12 - a21
    if denom == 0.0:
        raise ArithmeticError("degenerate 2x2 game without saddle")
    value = (a11 * a22 - a12 * a21) / denom
    return StageOutcome(value, (a22 - a21) / denom, (a22 - a12) / denom, False)


@dataclass(frozen=True)
class DynkinSolution:
    """value[n] is the game value with n epochs left; stop_prob[n, k] is
    player k+1's stop probability per state (forced to 1 at n = 0)."""

    value: np.ndarray
    stop_prob: np.ndarray

    @property
    def horizon(self) -> int:
        return self.value.shape[0] - 1


def solve_finite_dynkin(chain: MarkovChain, triple: PayoffTriple, horizon: int) -> DynkinSolution:
    """Backward induction over epochs; see the module docstring for the
    epoch game layout."""
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    if triple.both.size != chain.n_states:
        raise ValueError("payoff vectors must match the chain state count")
    n_states = chain.n_states
    value = np.empty((horizon + 1, n_states))
    stop_prob = np.empty((horizon + 1, 2, n_states))
    value[0] = triple.both
    stop_prob[0] = 1.0
    for n in range(1, horizon + 1):
        cont = chain.transition @ value[n - 1]
        for x in range(n_states):
            outcome = stage_value(
                triple.both[x], triple.only_p1[x], triple.only_p2[x], cont[x]
            )
            value[n, x] = outcome.value
            stop_prob[n, 0, x] = outcome.p1_stop
            stop_prob[n, 1, x] = outcome.p2_stop
    return DynkinSolution(value=value, stop_prob=stop_prob)


def dynkin_table_rows(solution: DynkinSolution, chain: MarkovChain) -> list:
    """Rows (steps_to_go, state, value, p1_stop_prob, p2_stop_prob)."""
    rows = []
    for n in range(solution.horizon + 1):
        for x, label in enumerate(chain.states):
            rows.append(
                (
                    n,
                    label,
                    float(solution.value[n, x]),
                    float(solution.stop_prob[n, 0, x]),
                    float(solution.stop_prob[n, 1, x]),
                )
            )
    return rows
