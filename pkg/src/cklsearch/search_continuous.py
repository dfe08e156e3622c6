"""Stage-based exponential search over a hypercube domain.

Each stage investigates the current region with fresh queries (prior
observations are dropped), then either zooms into one of the 5^d
children or backtracks to the 4x parent.  Two interchangeable decision
criteria are provided: a grid-posterior integration rule and a per-cell
binomial hypothesis-test rule.  Because the oracle is scale-free, every
stage is statistically identical up to the target's position within the
region, which is what produces the exponential convergence rate.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy.special import log_expit, logsumexp
from scipy.stats import binom

from .errors import DegenerateBeliefError, InvalidInputError, SessionError
from .geometry import Region, cell_edge_bound, children, enclosing_hypercube, parent
from .oracle import OracleModel, answer_probability

_CONTAIN_TOL = 1e-9


@dataclass(frozen=True)
class SearchConfig:
    """Parameters of one search run.

    The integration criterion backtracks once the region's posterior
    mass drops below 1 - alpha.  The stage prior spreads over a grid
    twice the region's edge, so the region starts with mass 2^-dim:
    alpha must exceed 1 - 2^-dim (true for the 0.95 default up to d=4)
    or stages would backtrack before seeing evidence.
    """

    dim: int
    gamma: float
    omega: Region
    query_budget: int
    criterion: str = "integration"  # or "hypothesis_test"
    alpha: float = 0.95
    delta_hat: float = 0.05
    grid_resolution: int | None = None
    max_queries_per_stage: int = 500
    seed: int = 0

    def __post_init__(self):
        if self.criterion not in ("integration", "hypothesis_test"):
            raise InvalidInputError(f"unknown criterion {self.criterion!r}")
        if not (0.5 < self.alpha < 1.0):
            raise InvalidInputError("alpha must lie in (0.5, 1)")
        if not (0.0 < self.delta_hat < 1.0):
            raise InvalidInputError("delta_hat must lie in (0, 1)")
        if self.omega.dim != self.dim:
            raise InvalidInputError("omega dimension does not match dim")
        if self.query_budget < 0:
            raise InvalidInputError("query budget must be non-negative")

    @property
    def resolution(self) -> int:
        if self.grid_resolution is not None:
            return self.grid_resolution
        return 32 if self.dim <= 3 else 12


def _grid_centers(region: Region, resolution: int) -> np.ndarray:
    lo = region.lower()
    step = region.edge / resolution
    axes = [lo[i] + (np.arange(resolution) + 0.5) * step for i in range(region.dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack(mesh, axis=-1).reshape(-1, region.dim)


@dataclass(frozen=True)
class GridBelief:
    """Discretized posterior over a region, kept in log space."""

    region: Region
    resolution: int
    log_weights: np.ndarray
    centers: np.ndarray

    @staticmethod
    def uniform(region: Region, resolution: int) -> "GridBelief":
        centers = _grid_centers(region, resolution)
        n = centers.shape[0]
        return GridBelief(
            region=region,
            resolution=resolution,
            log_weights=np.full(n, -math.log(n)),
            centers=centers,
        )

    @property
    def weights(self) -> np.ndarray:
        w = np.exp(self.log_weights - logsumexp(self.log_weights))
        return w / w.sum()

    def mass_in(self, region: Region) -> float:
        """Posterior mass of cells whose centers lie in ``region``."""
        inside = np.all(
            np.abs(self.centers - region.center) <= region.edge / 2 + _CONTAIN_TOL * region.edge,
            axis=1,
        )
        return float(self.weights[inside].sum())


def _log_likelihoods(model: OracleModel, centers: np.ndarray, qa, qb, answer: bool):
    """log P(observed answer | target at each grid center)."""
    qa = np.asarray(qa, dtype=float)
    qb = np.asarray(qb, dtype=float)
    da = np.linalg.norm(centers - qa, axis=1)
    db = np.linalg.norm(centers - qb, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        delta = np.log(da) - np.log(db)
        sign = -1.0 if answer else 1.0
        out = log_expit(sign * model.gamma * delta)
    both_zero = (da == 0) & (db == 0)
    if both_zero.any():
        out = np.where(both_zero, math.log(0.5), out)
    return out


def update_belief(belief: GridBelief, query, answer: bool, model: OracleModel) -> GridBelief:
    """Multiply in the likelihood of one observed answer and renormalize."""
    loglik = _log_likelihoods(model, belief.centers, query[0], query[1], answer)
    logw = belief.log_weights + loglik
    total = logsumexp(logw)
    if not np.isfinite(total):
        raise DegenerateBeliefError("belief update left zero total mass")
    return replace(belief, log_weights=logw - total)


@dataclass(frozen=True)
class Decision:
    kind: str  # "proceed" | "backtrack" | "undecided"
    child_index: int | None = None


def integration_decision(
    belief: GridBelief, region: Region, alpha: float, child_regions=None
) -> Decision:
    """Decide from posterior mass: proceed into the child holding more
    than alpha of the mass (largest wins, lowest index on ties), backtrack
    once the region holds less than 1 - alpha, otherwise stay undecided."""
    if child_regions is None:
        child_regions = children(region)
    best_idx = None
    best_mass = -1.0
    for idx, child in enumerate(child_regions):
        m = belief.mass_in(child)
        if m > alpha and m > best_mass:
            best_idx = idx
            best_mass = m
    if best_idx is not None:
        return Decision("proceed", best_idx)
    if belief.mass_in(region) < 1.0 - alpha:
        return Decision("backtrack")
    return Decision("undecided")


_ANCHOR_STEPS = (0.0, 0.25, -0.25, 0.5, -0.5)


@lru_cache(maxsize=32)
def _stage_anchors(d: int) -> tuple:
    """Anchor offsets {0, +-1/4, +-1/2}^d of the edge, central ones first.

    The pair midpoints must reach the region boundary: cuts at up to a
    half edge are what bound targets in the outer ring of the region.
    """
    combos = sorted(
        itertools.product(_ANCHOR_STEPS, repeat=d),
        key=lambda c: (sum(abs(v) for v in c), c),
    )
    return tuple(np.array(c) for c in combos)


def select_stage_query(region: Region, query_index: int):
    """Deterministic stage query: a symmetric pair of points a quarter
    edge either side of an anchor, the axis cycling per query and the
    anchor cycling over a {0, +1/4, -1/4}^d grid of the region.

    Symmetric in-region pairs keep the answer probability away from its
    saturated extremes over the whole region, and the anchor grid makes
    the pairs' equal-probability sphere centers span the space, so the
    stage posterior localizes the target instead of an ambiguous shell.
    """
    d = region.dim
    anchors = _stage_anchors(d)
    axis = query_index % d
    block = query_index // d
    sign = 1.0 if block % 2 == 0 else -1.0
    anchor = anchors[block % len(anchors)] * region.edge
    offset = np.zeros(d)
    offset[axis] = sign * 0.25 * region.edge
    center = region.center + anchor
    return center - offset, center + offset


@dataclass(frozen=True)
class HypTestPlan:
    """Fixed-size binomial test for "the target is in this cell"."""

    query: tuple
    n_repeats: int
    accept_threshold: int
    p_inside: float
    p_far: float
    delta: float


def _canonical_test_probabilities(d: int, gamma: float) -> tuple[float, float]:
    """Win probabilities of the canonical inside point for the two
    extreme target positions of the edge-2 test geometry."""
    d_c = math.sqrt(d)
    d_qc = math.sqrt(d * d + d - 1)
    p_inside = float(1.0 / (1.0 + (d_c / d_qc) ** gamma))
    r_hat = (d + math.sqrt(d**3 + d**2 - d)) / (d - 1)
    far = r_hat + 1.0
    p_far = float(1.0 / (1.0 + (far / (1 + d + far)) ** gamma))
    return p_inside, p_far


@lru_cache(maxsize=128)
def _plan_counts(d: int, gamma: float, delta: float) -> tuple[int, int]:
    """Smallest n (with threshold) making both one-sided binomial errors
    at most delta: reject-when-inside and accept-when-far."""
    p_x, p_f = _canonical_test_probabilities(d, gamma)
    if not p_x > p_f:
        raise InvalidInputError("test separation vanished; gamma invalid")

    def threshold_for(n: int):
        # smallest k with P[Bin(n, p_f) >= k] <= delta
        k = int(binom.isf(delta, n, p_f)) + 1
        while k <= n and binom.sf(k - 1, n, p_f) > delta:
            k += 1
        if k > n:
            return None
        # check the inside error mode: P[Bin(n, p_x) < k] <= delta
        if binom.cdf(k - 1, n, p_x) <= delta:
            return k
        return None

    lo, hi = 1, 1
    while threshold_for(hi) is None:
        hi *= 2
        if hi > 10**8:
            raise InvalidInputError("hypothesis-test plan did not converge")
    while lo < hi:
        mid = (lo + hi) // 2
        if threshold_for(mid) is not None:
            hi = mid
        else:
            lo = mid + 1
    return lo, threshold_for(lo)


def hyptest_plan(d: int, model: OracleModel, delta: float) -> HypTestPlan:
    """Plan the per-cell test for the canonical edge-2 geometry."""
    if d < 2:
        raise InvalidInputError("hypothesis test requires d >= 2")
    if not (0.0 < delta < 1.0):
        raise InvalidInputError("delta must lie in (0,1)")
    p_x, p_f = _canonical_test_probabilities(d, model.gamma)
    n, k = _plan_counts(d, model.gamma, delta)
    e = np.zeros(d)
    e[0] = 1.0
    return HypTestPlan(
        query=(np.zeros(d), (1 + d) * e),
        n_repeats=n,
        accept_threshold=k,
        p_inside=p_x,
        p_far=p_f,
        delta=delta,
    )


def _tiling_centers(region: Region, cell_edge: float) -> tuple[np.ndarray, int]:
    """Cell centers of the tiling of S without materializing Region objects."""
    s_edge = 1.5 * region.edge
    k = round(s_edge / cell_edge)
    lo = region.center - s_edge / 2
    axes = [lo[i] + (np.arange(k) + 0.5) * cell_edge for i in range(region.dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack(mesh, axis=-1).reshape(-1, region.dim), k


def hyptest_decision(
    region: Region, model: OracleModel, oracle, delta_hat: float
) -> tuple[Decision, int]:
    """One stage of the hypothesis-test criterion.

    Tiles the enlarged hypercube S at the admissible cell edge, runs the
    planned binomial test for every cell (per-test error split so that
    all K tests are jointly correct with probability 1 - delta_hat),
    boxes the accepted cells, and proceeds into a child that fully
    contains the box; anything else - empty box, oversized box, or a box
    that no child contains - means backtrack.  Returns the decision and
    the number of oracle queries spent.
    """
    d = region.dim
    r_c = cell_edge_bound(d) * region.edge
    centers, _ = _tiling_centers(region, r_c)
    n_cells = centers.shape[0]
    per_test_delta = 1.0 - (1.0 - delta_hat) ** (1.0 / n_cells)
    plan = hyptest_plan(d, model, per_test_delta)
    offset = np.zeros(d)
    offset[0] = (1 + d) * (r_c / 2)
    qa = centers
    qb = centers + offset
    successes = oracle.answer_count_many(qa, qb, plan.n_repeats)
    queries_used = n_cells * plan.n_repeats
    accepted = successes >= plan.accept_threshold
    if not accepted.any():
        return Decision("backtrack"), queries_used
    half = r_c / 2
    box_lo = centers[accepted].min(axis=0) - half
    box_hi = centers[accepted].max(axis=0) + half
    tol = _CONTAIN_TOL * region.edge
    for idx, child in enumerate(children(region)):
        if np.all(box_lo >= child.lower() - tol) and np.all(box_hi <= child.upper() + tol):
            return Decision("proceed", idx), queries_used
    return Decision("backtrack"), queries_used


class SimulatedOracle:
    """Answer source backed by the probabilistic choice model and a
    hidden target point."""

    def __init__(self, model: OracleModel, target, rng: np.random.Generator):
        self.model = model
        self.target = np.asarray(target, dtype=float)
        self.rng = rng

    def _probs(self, qa: np.ndarray, qb: np.ndarray) -> np.ndarray:
        from scipy.special import expit

        da = np.linalg.norm(qa - self.target, axis=1)
        db = np.linalg.norm(qb - self.target, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            delta = np.log(da) - np.log(db)
            p = expit(-self.model.gamma * delta)
        both = (da == 0) & (db == 0)
        if both.any():
            p = np.where(both, 0.5, p)
        return p

    def answer(self, qa, qb) -> bool:
        p = answer_probability(self.model, qa, qb, self.target)
        return bool(self.rng.random() < p)

    def answer_count(self, qa, qb, n: int) -> int:
        p = answer_probability(self.model, qa, qb, self.target)
        return int(self.rng.binomial(n, p))

    def answer_count_many(self, qa: np.ndarray, qb: np.ndarray, n: int) -> np.ndarray:
        return self.rng.binomial(n, self._probs(qa, qb))


@dataclass(frozen=True)
class StageRecord:
    """One stage of a search run, recorded after the decision."""

    stage: int
    decision: str
    child_index: int | None
    queries_in_stage: int
    cumulative_queries: int
    region: Region
    dist_to_target: float | None


@dataclass(frozen=True)
class SearchResult:
    final_region: Region
    records: list

    @property
    def total_queries(self) -> int:
        return self.records[-1].cumulative_queries if self.records else 0


def run_search(config: SearchConfig, oracle) -> SearchResult:
    """Run the staged search until the query budget is spent.

    The budget check happens between stages, so the stage that crosses
    the budget is completed; a zero budget yields no stages at all.
    """
    model = OracleModel(gamma=config.gamma, dim=config.dim)
    region = config.omega
    records: list[StageRecord] = []
    target = getattr(oracle, "target", None)
    m = 0
    stage = 0
    while m < config.query_budget:
        try:
            if config.criterion == "hypothesis_test":
                decision, used = hyptest_decision(region, model, oracle, config.delta_hat)
            else:
                decision, used = _integration_stage(config, model, region, oracle)
        except SessionError as err:
            err.records = records
            raise
        m += used
        if decision.kind == "proceed":
            region = children(region)[decision.child_index]
        else:
            region = parent(region)
        dist = None if target is None else float(np.linalg.norm(region.center - target))
        records.append(
            StageRecord(
                stage=stage,
                decision=decision.kind,
                child_index=decision.child_index,
                queries_in_stage=used,
                cumulative_queries=m,
                region=region,
                dist_to_target=dist,
            )
        )
        stage += 1
    return SearchResult(final_region=region, records=records)


BELIEF_EXTENT_FACTOR = 2.0  # grid spans the region plus a half-edge margin each side


def _integration_stage(
    config: SearchConfig, model: OracleModel, region: Region, oracle
) -> tuple[Decision, int]:
    """One stage under the integration criterion: query until the
    posterior is decisive or the per-stage cap forces a backtrack.

    Decisions are deferred until every axis has been queried twice so a
    single early answer cannot tip the region mass below the backtrack
    threshold before there is any real evidence.
    """
    extent = Region(
        center=region.center, edge=BELIEF_EXTENT_FACTOR * region.edge, depth=region.depth
    )
    belief = GridBelief.uniform(extent, config.resolution)
    child_regions = children(region)
    tol = _CONTAIN_TOL * region.edge
    masks = [
        np.all(np.abs(belief.centers - k.center) <= k.edge / 2 + tol, axis=1)
        for k in child_regions
    ]
    region_mask = np.all(np.abs(belief.centers - region.center) <= region.edge / 2 + tol, axis=1)
    min_queries = 2 * config.dim
    used = 0
    while True:
        q = select_stage_query(region, used)
        ans = oracle.answer(q[0], q[1])
        used += 1
        belief = update_belief(belief, q, ans, model)
        if used >= min_queries:
            w = belief.weights
            best_idx = None
            best_mass = -1.0
            for idx, mask in enumerate(masks):
                m = float(w[mask].sum())
                if m > config.alpha and m > best_mass:
                    best_idx = idx
                    best_mass = m
            if best_idx is not None:
                return Decision("proceed", best_idx), used
            if float(w[region_mask].sum()) < 1.0 - config.alpha:
                return Decision("backtrack"), used
        if used >= config.max_queries_per_stage:
            return Decision("backtrack"), used
