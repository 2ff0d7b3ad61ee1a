"""Simple games: monotone families of winning coalitions over p players.

A simple game assigns every coalition of players a value 0 (losing) or
1 (winning).  Coalitions are encoded as bitmasks over {1, .., p}: bit
i-1 set means player i belongs to the coalition.  A well-formed game
satisfies three axioms: the grand coalition wins, the empty coalition
loses, and winning is monotone (every superset of a winning coalition
wins).  Because monotonicity is validated on construction, the stored
family is always closed under supersets.

The aggregation function turns a vector of 0/1 stop declarations into
one effective group decision: the group stops iff the set of yes-voters
is a winning coalition.  `aggregate_sum_form` evaluates the equivalent
sum-of-products formula over the winning family and is retained as a
cross-check oracle (exactly one product term can be nonzero, the one
whose coalition equals the yes-voter set).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

MAX_PLAYERS = 16


def players_of(mask: int) -> tuple[int, ...]:
    """1-based player numbers belonging to a coalition bitmask."""
    return tuple(i + 1 for i in range(MAX_PLAYERS) if mask >> i & 1)


class EmptyCoalitionWinning(ValueError):
    """The empty coalition was declared winning."""


class GrandCoalitionLosing(ValueError):
    """The grand coalition is not in the winning family."""


class MonotonicityViolation(ValueError):
    """Some winning coalition has a losing superset."""

    def __init__(self, p: int, winner: int, loser: int):
        self.winner = winner
        self.loser = loser
        super().__init__(
            f"coalition {players_of(winner)} wins but its superset "
            f"{players_of(loser)} loses"
        )


@dataclass(frozen=True)
class SimpleGame:
    """A validated simple game; immutable, safe to share across threads."""

    p: int
    winning: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if not 1 <= self.p <= MAX_PLAYERS:
            raise ValueError(f"player count must be in 1..{MAX_PLAYERS}, got {self.p}")
        object.__setattr__(self, "winning", frozenset(int(m) for m in self.winning))
        full = (1 << self.p) - 1
        for mask in self.winning:
            if not 0 <= mask <= full:
                raise ValueError(f"coalition mask {mask} out of range for p={self.p}")
        if 0 in self.winning:
            raise EmptyCoalitionWinning("the empty coalition must lose")
        for mask in sorted(self.winning):
            for i in range(self.p):
                above = mask | (1 << i)
                if above not in self.winning:
                    raise MonotonicityViolation(self.p, mask, above)
        if full not in self.winning:
            raise GrandCoalitionLosing("the grand coalition must win")

    @property
    def grand_coalition(self) -> int:
        return (1 << self.p) - 1

    def is_winning(self, mask: int) -> bool:
        return mask in self.winning

    def vote_mask(self, votes: Sequence[int]) -> int:
        """Bitmask of yes-voters from a 0/1 vote vector of length p."""
        if len(votes) != self.p:
            raise ValueError(f"expected {self.p} votes, got {len(votes)}")
        mask = 0
        for i, v in enumerate(votes):
            if v not in (0, 1, False, True):
                raise ValueError(f"vote {v!r} is not 0/1")
            if v:
                mask |= 1 << i
        return mask

    def winning_table(self) -> np.ndarray:
        """Boolean lookup table over all 2^p coalition masks."""
        table = np.zeros(1 << self.p, dtype=bool)
        for mask in self.winning:
            table[mask] = True
        return table

    @classmethod
    def majority(cls, p: int, r: int) -> "SimpleGame":
        """Coalitions of size >= r win (r = p is unanimity, r = 1 is 'anyone')."""
        if not 1 <= r <= p:
            raise ValueError(f"majority level must be in 1..{p}, got {r}")
        winning = {m for m in range(1 << p) if bin(m).count("1") >= r}
        return cls(p, frozenset(winning))

    @classmethod
    def from_minimal(cls, p: int, coalitions: Iterable[Iterable[int]]) -> "SimpleGame":
        """Build a game from minimal winning coalitions (1-based player lists),
        closing the family upward before validation."""
        winning = set()
        for coalition in coalitions:
            mask = 0
            for player in coalition:
                if not 1 <= player <= p:
                    raise ValueError(f"player {player} out of range 1..{p}")
                mask |= 1 << (player - 1)
            rest = ((1 << p) - 1) & ~mask
            sub = rest
            while True:
                winning.add(mask | sub)
                if sub == 0:
                    break
                sub = (sub - 1) & rest
        return cls(p, frozenset(winning))


def validate(p: int, winning: Iterable[int]) -> SimpleGame:
    """Check the three axioms on an explicit family of coalition bitmasks."""
    return SimpleGame(p, frozenset(winning))


def aggregate(game: SimpleGame, votes: Sequence[int]) -> int:
    """1 iff the yes-voters form a winning coalition."""
    return int(game.is_winning(game.vote_mask(votes)))


def aggregate_sum_form(game: SimpleGame, votes: Sequence[int]) -> int:
    """Literal sum over winning coalitions of exact-membership products."""
    yes = game.vote_mask(votes)
    total = 0
    for coalition in game.winning:
        term = 1
        for i in range(game.p):
            bit = yes >> i & 1
            term *= bit if coalition >> i & 1 else 1 - bit
        total += term
    return total
