"""Fused disorder detection by a network of sensors.

Each sensor runs its own disorder model on an independent channel; a
simple game on the sensors says which coalitions of simultaneous alarms
count as a network alarm.  The pipeline discretizes every sensor's
posterior, forms the product chain of the sensor chains (independence
makes the product kernel exact), lifts each sensor's window payoff to
the product state, and solves the resulting voting stopping game.  The
equilibrium sets are then replayed by Monte Carlo on fresh trajectories
with exact (undiscretized) posteriors, snapped to the grid only at
decision time, so the report shows real detection rates rather than
grid-world ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import reduce
from typing import Optional

import numpy as np

from .disorder import (
    CHAIN_SIZE_GUARD,
    DetectionChain,
    DisorderModel,
    GridTooLarge,
    build_detection_chain,
    initial_posterior,
    posterior_step,
    simulate_disorder,
)
from .markov import MarkovChain
from .rng import substream
from .simple_game import SimpleGame
from .voting_game import GameSpec, solve_finite

__all__ = ["NetSpec", "NetGame", "NetReport", "build_net_game", "run_pipeline"]


@dataclass(frozen=True)
class NetSpec:
    sensors: tuple
    fusion: SimpleGame
    grid_size: int
    horizon: int

    def __post_init__(self):
        sensors = tuple(self.sensors)
        if not sensors or not all(isinstance(m, DisorderModel) for m in sensors):
            raise ValueError("sensors must be a non-empty list of DisorderModel")
        if self.fusion.p != len(sensors):
            raise ValueError(
                f"fusion game has {self.fusion.p} players for {len(sensors)} sensors"
            )
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        object.__setattr__(self, "sensors", sensors)


@dataclass(frozen=True)
class NetGame:
    """Product-chain stopping game plus the per-sensor discretizations."""

    spec: GameSpec
    detections: tuple
    sizes: tuple

    def product_index(self, component_indices) -> int:
        idx = 0
        for size, component in zip(self.sizes, component_indices):
            idx = idx * size + component
        return idx

    @property
    def initial_index(self) -> int:
        return self.product_index([d.initial_index for d in self.detections])


def build_net_game(net: NetSpec) -> NetGame:
    """Compose the sensors' detection chains into one GameSpec."""
    detections = tuple(build_detection_chain(m, net.grid_size) for m in net.sensors)
    sizes = tuple(d.n_states for d in detections)
    total = math.prod(sizes)
    if total > CHAIN_SIZE_GUARD:
        raise GridTooLarge(f"{total} product states exceed the {CHAIN_SIZE_GUARD} guard")

    transition = reduce(np.kron, (d.chain.transition for d in detections))
    utilities = np.empty((len(detections), total))
    for i, det in enumerate(detections):
        inner = math.prod(sizes[i + 1 :])
        outer = math.prod(sizes[:i])
        utilities[i] = np.tile(np.repeat(det.utility, inner), outer)
    chain = MarkovChain(tuple(range(total)), transition)
    spec = GameSpec(chain=chain, utilities=utilities, game=net.fusion, horizon=net.horizon)
    return NetGame(spec=spec, detections=detections, sizes=sizes)


@dataclass(frozen=True)
class NetReport:
    """Equilibrium values at the start state plus Monte Carlo replay stats."""

    dp_values: tuple
    detection_freq: Optional[tuple]
    detection_stderr: Optional[tuple]
    stop_time_counts: Optional[dict]
    mc_reps: int
    horizon: int
    grid_size: int
    state_count: int

    def to_dict(self) -> dict:
        return {
            "dp_values": list(self.dp_values),
            "detection_freq": None if self.detection_freq is None else list(self.detection_freq),
            "detection_stderr": None
            if self.detection_stderr is None
            else list(self.detection_stderr),
            "stop_time_counts": None
            if self.stop_time_counts is None
            else {str(k): v for k, v in sorted(self.stop_time_counts.items())},
            "mc_reps": self.mc_reps,
            "horizon": self.horizon,
            "grid_size": self.grid_size,
            "state_count": self.state_count,
        }


def run_pipeline(net: NetSpec, x0=None, mc_reps: int = 0, seed: int = 0) -> NetReport:
    """Solve the fused game and replay the equilibrium on fresh channels.

    `x0` optionally overrides the sensors' initial observations (a list
    of observation labels, one per sensor) for both the game start state
    and the simulated channels.  With mc_reps = 0 the report carries the
    dynamic-programming values only.
    """
    if x0 is not None:
        if len(x0) != len(net.sensors):
            raise ValueError("x0 must list one start observation per sensor")
        sensors = tuple(
            replace(model, start=label) for model, label in zip(net.sensors, x0)
        )
        net = NetSpec(sensors, net.fusion, net.grid_size, net.horizon)
    game = build_net_game(net)
    solution = solve_finite(game.spec)
    n = net.horizon
    start = game.initial_index
    dp_values = tuple(float(solution.values[i, n, start]) for i in range(len(net.sensors)))

    if mc_reps <= 0:
        return NetReport(
            dp_values=dp_values,
            detection_freq=None,
            detection_stderr=None,
            stop_time_counts=None,
            mc_reps=0,
            horizon=n,
            grid_size=net.grid_size,
            state_count=game.spec.n_states,
        )

    p = len(net.sensors)
    hits = np.zeros((mc_reps, p))
    stop_counts: dict = {}
    for r in range(mc_reps):
        rng = substream(seed, r)
        paths = []
        thetas = []
        for model in net.sensors:
            path, theta = simulate_disorder(model, n, rng)
            paths.append(path)
            thetas.append(theta)
        posteriors = [initial_posterior(m) for m in net.sensors]
        tau = n
        for stage in range(1, n + 1):
            posteriors = [
                posterior_step(m, st, int(path[stage]))
                for m, st, path in zip(net.sensors, posteriors, paths)
            ]
            state = game.product_index(
                [det.snap_index(st) for det, st in zip(game.detections, posteriors)]
            )
            votes = solution.profile.stop[stage - 1, :, state]
            if net.fusion.is_winning(net.fusion.vote_mask(votes.tolist())):
                tau = stage
                break
        stop_counts[tau] = stop_counts.get(tau, 0) + 1
        for i, model in enumerate(net.sensors):
            hits[r, i] = 1.0 if abs(thetas[i] - tau) <= model.window else 0.0

    freq = hits.mean(axis=0)
    if mc_reps > 1:
        stderr = hits.std(axis=0, ddof=1) / math.sqrt(mc_reps)
    else:
        stderr = np.zeros(p)
    return NetReport(
        dp_values=dp_values,
        detection_freq=tuple(float(v) for v in freq),
        detection_stderr=tuple(float(v) for v in stderr),
        stop_time_counts=stop_counts,
        mc_reps=mc_reps,
        horizon=n,
        grid_size=net.grid_size,
        state_count=game.spec.n_states,
    )
