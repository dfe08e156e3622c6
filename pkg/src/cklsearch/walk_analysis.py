"""Simulation of the error-counting random walk behind the search.

The search's mistakes are tracked by z, the number of backtracks needed
to regain a region containing the target.  Under a decision margin b,
z is stochastically dominated by a birth-death chain Z on the naturals
that moves up with probability (1-b)/2 and down with (1+b)/2 (self-loop
at 0).  The estimators here verify the chain's closed forms: stationary
mass pi_0 = 2b/(b+1), geometric tail ((1-b)/(1+b))^k, and mean hitting
time 1/b from state 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError


@dataclass(frozen=True)
class BiasParams:
    """Margin b by which correct decisions outweigh incorrect ones."""

    b: float

    def __post_init__(self):
        if not (0.0 < self.b < 1.0):
            raise InvalidInputError(f"bias must lie in (0,1), got {self.b}")

    @property
    def p_up(self) -> float:
        return (1.0 - self.b) / 2.0

    @property
    def p_down(self) -> float:
        return (1.0 + self.b) / 2.0


@dataclass(frozen=True)
class WalkTrace:
    """A realized path of the upper-bound chain."""

    states: tuple
    steps: int

    def __post_init__(self):
        st = self.states
        for a, b in zip(st, st[1:]):
            if abs(b - a) > 1 or b < 0:
                raise InvalidInputError("chain moves by at most 1 and stays non-negative")


@dataclass(frozen=True)
class TransitionProbs:
    """One row pair of the region-walk transition table.

    Green-region row: proceed to a green child (p_d), backtrack (q_u),
    stray to a red child (q_s).  Red-region row: backtrack (p_u), recover
    to a green child (p_r), descend into a red child (q_d).
    """

    p_d: float
    q_u: float
    q_s: float
    p_u: float
    p_r: float
    q_d: float
    b: float

    def __post_init__(self):
        for name in ("p_d", "q_u", "q_s", "p_u", "p_r", "q_d"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise InvalidInputError(f"{name} must be a probability, got {v}")
        if abs(self.p_d + self.q_u + self.q_s - 1.0) > 1e-12:
            raise InvalidInputError("green row must sum to 1")
        if abs(self.p_u + self.p_r + self.q_d - 1.0) > 1e-12:
            raise InvalidInputError("red row must sum to 1")
        if not (0.0 < self.b < 1.0):
            raise InvalidInputError("margin b must lie in (0,1)")
        if not (self.p_d - (self.q_u + self.q_s) > self.b):
            raise InvalidInputError("green margin p_d - (q_u + q_s) must exceed b")
        if not ((self.p_u + self.p_r) - self.q_d > self.b):
            raise InvalidInputError("red margin (p_u + p_r) - q_d must exceed b")
        if not (self.p_d - 2 * self.q_u - self.q_s * (self.b + 1) / (2 * self.b) > 0):
            raise InvalidInputError("depth-gain condition violated")

    def depth_rate_lower_bound(self) -> float:
        """Guaranteed linear depth growth per stage."""
        gain = self.p_d - 2 * self.q_u - self.q_s * (self.b + 1) / (2 * self.b)
        period = self.q_u + self.p_d + self.q_s * (self.b + 1) / self.b
        return gain / period


def step_z(state: int, b: BiasParams, rng: np.random.Generator) -> int:
    """One transition of the upper-bound chain."""
    if state < 0:
        raise InvalidInputError("state must be non-negative")
    u = rng.random()
    if state == 0:
        return 1 if u < b.p_up else 0
    return state + 1 if u < b.p_up else state - 1


def simulate_z(
    start: int, n_steps: int, b: BiasParams, rng: np.random.Generator
) -> np.ndarray:
    """Vectorized path of the chain over ``n_steps`` transitions."""
    ups = rng.random(n_steps) < b.p_up
    states = np.empty(n_steps + 1, dtype=np.int64)
    states[0] = start
    s = start
    for i, up in enumerate(ups):
        if up:
            s += 1
        elif s > 0:
            s -= 1
        states[i + 1] = s
    return states


def estimate_stationary(
    b: BiasParams, n_steps: int, rng: np.random.Generator
) -> dict[int, float]:
    """Long-run occupancy frequencies, discarding a 10% burn-in."""
    if n_steps < 10_000:
        raise InvalidInputError("need at least 1e4 steps for a stationary estimate")
    states = simulate_z(0, n_steps, b, rng)
    kept = states[n_steps // 10 :]
    counts = np.bincount(kept)
    total = kept.size
    return {int(s): float(c) / total for s, c in enumerate(counts) if c > 0}


def stationary_exact(b: BiasParams, state: int) -> float:
    """Closed-form stationary mass: pi_n = ((1-b)/(1+b))^n * 2b/(b+1)."""
    pi0 = 2 * b.b / (b.b + 1)
    return pi0 * ((1 - b.b) / (1 + b.b)) ** state


@dataclass(frozen=True)
class HittingTimeEstimate:
    mean: float
    ci_low: float
    ci_high: float
    n_episodes: int


def estimate_stray_time(
    b: BiasParams, n_episodes: int, rng: np.random.Generator, max_steps: int = 10**7
) -> HittingTimeEstimate:
    """Mean steps for the chain to hit 0 from state 1, with a 95% CI.

    The closed form is exactly 1/b.
    """
    if n_episodes < 100:
        raise InvalidInputError("need at least 100 episodes")
    times = np.zeros(n_episodes, dtype=np.int64)
    active = np.ones(n_episodes, dtype=bool)
    states = np.ones(n_episodes, dtype=np.int64)
    steps = 0
    while active.any():
        steps += 1
        if steps > max_steps:
            raise InvalidInputError("hitting-time simulation exceeded max_steps")
        n_act = int(active.sum())
        ups = rng.random(n_act) < b.p_up
        states[active] += np.where(ups, 1, -1)
        hit = active.copy()
        hit[active] = states[active] == 0
        times[hit] = steps
        active &= ~hit
    mean = float(times.mean())
    half = 1.96 * float(times.std(ddof=1)) / np.sqrt(n_episodes)
    return HittingTimeEstimate(mean, mean - half, mean + half, n_episodes)


def error_tail(
    b: BiasParams, s: int, k: int, n_runs: int, rng: np.random.Generator
) -> float:
    """Empirical P[Z_s > k] over independent runs started at 0."""
    if s < 1 or n_runs < 1 or k < 0:
        raise InvalidInputError("s and n_runs must be positive, k non-negative")
    states = np.zeros(n_runs, dtype=np.int64)
    for _ in range(s):
        ups = rng.random(n_runs) < b.p_up
        states = np.where(ups, states + 1, np.maximum(states - 1, 0))
    return float(np.mean(states > k))


def tail_bound(b: BiasParams, k: int) -> float:
    """Geometric tail bound ((1-b)/(1+b))^k."""
    return ((1 - b.b) / (1 + b.b)) ** k


@dataclass(frozen=True)
class RegionWalkStage:
    stage: int
    depth: int
    is_green: bool
    z: int


def simulate_region_walk(
    probs: TransitionProbs,
    n_stages: int,
    rng: np.random.Generator,
    start_z: int = 0,
) -> list[RegionWalkStage]:
    """Abstract region walk driven by a transition table.

    State is (depth, z): green means z = 0.  From green: proceed to a
    green child (+1 depth), backtrack (-2 depth, still green since the
    parent of a green region is green), or stray (+1 depth, z = 1).  From
    red: backtrack (-2 depth, z - 1), recover (+1 depth, z = 0; only
    reachable from z = 1), or descend into a red child (+1 depth, z + 1).
    For z > 1, where recovery is geometrically impossible, the recover
    mass joins the backtrack mass: both decrement z.
    """
    depth = 0
    z = start_z
    out = []
    for s in range(n_stages):
        u = rng.random()
        if z == 0:
            if u < probs.p_d:
                depth += 1
            elif u < probs.p_d + probs.q_u:
                depth -= 2
            else:
                depth += 1
                z = 1
        elif z == 1:
            if u < probs.p_u:
                depth -= 2
                z = 0
            elif u < probs.p_u + probs.p_r:
                depth += 1
                z = 0
            else:
                depth += 1
                z = 2
        else:
            if u < probs.p_u + probs.p_r:
                depth -= 2
                z -= 1
            else:
                depth += 1
                z += 1
        out.append(RegionWalkStage(stage=s, depth=depth, is_green=(z == 0), z=z))
    return out


def coupled_walk(
    probs: TransitionProbs, n_stages: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Region walk and upper-bound chain driven by one shared uniform stream.

    Returns the two z-paths; the coupling guarantees z <= Z pointwise.
    """
    z = 0
    upper = 0
    zs = np.zeros(n_stages + 1, dtype=np.int64)
    uppers = np.zeros(n_stages + 1, dtype=np.int64)
    thr = (1 + probs.b) / 2
    for s in range(n_stages):
        u = rng.random()
        if z == 0:
            if u > probs.p_d + probs.q_u:
                z = 1
        elif z == 1:
            if u <= probs.p_u + probs.p_r:
                z = 0
            else:
                z = 2
        else:
            if u <= probs.p_u + probs.p_r:
                z -= 1
            else:
                z += 1
        if upper == 0:
            if u > thr:
                upper = 1
        else:
            upper = upper - 1 if u <= thr else upper + 1
        zs[s + 1] = z
        uppers[s + 1] = upper
    return zs, uppers
