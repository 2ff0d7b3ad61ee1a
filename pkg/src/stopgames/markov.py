"""Finite-state homogeneous Markov chains.

The chain is the common substrate of every solver in this package: a
finite label set plus a row-stochastic transition matrix.  `expect` is
the one-step expectation operator (P g)(x) = sum_y P(x, y) g(y), and
`simulate` draws a seeded state path.  Real-valued functions on the
state space are plain float vectors indexed like `states`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import as_generator, sample_index

ROW_SUM_TOL = 1e-12


class NegativeEntry(ValueError):
    """A transition matrix entry is negative."""

    def __init__(self, row: int, col: int, value: float):
        self.row, self.col, self.value = row, col, value
        super().__init__(f"transition[{row}][{col}] = {value} is negative")


class RowSumError(ValueError):
    """A transition matrix row does not sum to one."""

    def __init__(self, row: int, deviation: float):
        self.row, self.deviation = row, deviation
        super().__init__(f"row {row} sums to 1{deviation:+.3e}")


def validate_transition_matrix(matrix) -> np.ndarray:
    """Return `matrix` as a checked row-stochastic float array."""
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"transition matrix must be square, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("transition matrix has non-finite entries")
    rows, cols = np.nonzero(m < 0.0)
    if rows.size:
        r, c = int(rows[0]), int(cols[0])
        raise NegativeEntry(r, c, float(m[r, c]))
    sums = m.sum(axis=1)
    bad = np.nonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)[0]
    if bad.size:
        r = int(bad[0])
        raise RowSumError(r, float(sums[r] - 1.0))
    return m


@dataclass(frozen=True)
class MarkovChain:
    """Validated chain; immutable after construction."""

    states: tuple
    transition: np.ndarray

    def __post_init__(self):
        states = tuple(self.states)
        if len(set(states)) != len(states):
            raise ValueError("state labels must be unique")
        matrix = validate_transition_matrix(self.transition)
        if matrix.shape[0] != len(states):
            raise ValueError(
                f"{len(states)} states but {matrix.shape[0]}x{matrix.shape[1]} matrix"
            )
        matrix = matrix.copy()
        matrix.flags.writeable = False
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "transition", matrix)

    @property
    def n_states(self) -> int:
        return len(self.states)

    def index(self, label) -> int:
        try:
            return self.states.index(label)
        except ValueError:
            raise ValueError(f"unknown state {label!r}") from None


def validate(states, matrix) -> MarkovChain:
    """Build a checked chain from labels and a row-major matrix."""
    return MarkovChain(tuple(states), matrix)


def expect(chain: MarkovChain, values) -> np.ndarray:
    """One-step conditional expectation: (P g)(x) = sum_y P(x, y) g(y)."""
    g = np.asarray(values, dtype=float)
    if g.shape != (chain.n_states,):
        raise ValueError(f"expected vector of length {chain.n_states}, got {g.shape}")
    return chain.transition @ g


def simulate(chain: MarkovChain, x0: int, horizon: int, seed) -> np.ndarray:
    """State-index path (x0, X_1, .., X_horizon), reproducible from `seed`.

    `seed` may be an int, a SeedSequence, or an existing Generator (so MC
    harnesses can pass in per-replication substreams).
    """
    if not 0 <= x0 < chain.n_states:
        raise ValueError(f"x0 index {x0} out of range")
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    rng = as_generator(seed)
    path = np.empty(horizon + 1, dtype=np.int64)
    path[0] = x0
    current = x0
    for n in range(1, horizon + 1):
        current = sample_index(rng, chain.transition[current])
        path[n] = current
    return path
