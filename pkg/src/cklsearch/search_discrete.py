"""Bayesian comparison search over a finite embedded item set.

Maintains a full posterior over which item is the target.  Each step
builds a proto-query from the belief's mean and top covariance
eigenvector (found by power iteration), snaps the two proto-points to
unused items by belief-weighted distance, asks the oracle, and applies a
Bayes update with the choice-model likelihood.  Items shown once never
reappear; the search ends when the target itself is displayed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit

from .errors import BudgetExceededError, ExhaustedError, InvalidInputError

POWER_ITER_MAX = 1000
POWER_ITER_RESIDUAL = 1e-6


@dataclass(frozen=True)
class ItemSet:
    """Embedded items addressable by unique string ids."""

    ids: tuple
    vectors: np.ndarray  # (n, d)
    display_urls: tuple | None = None

    def __post_init__(self):
        if len(set(self.ids)) != len(self.ids):
            raise InvalidInputError("item ids must be unique")
        vecs = np.asarray(self.vectors, dtype=float)
        if vecs.ndim != 2 or vecs.shape[0] != len(self.ids):
            raise InvalidInputError("vectors must be an (n, d) array matching ids")
        if not np.all(np.isfinite(vecs)):
            raise InvalidInputError("vectors must be finite")
        object.__setattr__(self, "vectors", vecs)
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "_index", {item_id: k for k, item_id in enumerate(self.ids)})
        if self.display_urls is not None and len(self.display_urls) != len(self.ids):
            raise InvalidInputError("display_urls must match ids")

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def index_of(self, item_id: str) -> int:
        try:
            return self._index[item_id]
        except KeyError:
            raise InvalidInputError(f"unknown item id {item_id!r}") from None

    @staticmethod
    def from_manifest(entries) -> "ItemSet":
        """Build from a JSON manifest: [{"id", "vector", "display_url"?}]."""
        ids = [e["id"] for e in entries]
        vectors = np.array([e["vector"] for e in entries], dtype=float)
        urls = tuple(e.get("display_url") for e in entries)
        if all(u is None for u in urls):
            urls = None
        return ItemSet(ids=tuple(ids), vectors=vectors, display_urls=urls)

    @staticmethod
    def load(path) -> "ItemSet":
        with open(path, encoding="utf-8") as fh:
            return ItemSet.from_manifest(json.load(fh))

    def to_manifest(self) -> list:
        out = []
        for i, item_id in enumerate(self.ids):
            entry = {"id": item_id, "vector": [float(v) for v in self.vectors[i]]}
            if self.display_urls is not None and self.display_urls[i] is not None:
                entry["display_url"] = self.display_urls[i]
            out.append(entry)
        return out


@dataclass(frozen=True)
class DiscreteBelief:
    """Posterior probability of each item being the target."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if np.any(p < 0) or not np.isfinite(p).all():
            raise InvalidInputError("belief probabilities must be finite and >= 0")
        if abs(p.sum() - 1.0) > 1e-9:
            raise InvalidInputError("belief must sum to 1")
        object.__setattr__(self, "probs", p)

    @staticmethod
    def uniform(n: int) -> "DiscreteBelief":
        return DiscreteBelief(np.full(n, 1.0 / n))

    def entropy(self) -> float:
        p = self.probs[self.probs > 0]
        return float(-(p * np.log(p)).sum())


@dataclass(frozen=True)
class DiscreteSearchState:
    """Full state of one search session; transitions are pure."""

    belief: DiscreteBelief
    used: frozenset
    step: int
    r: float
    gamma: float
    history: tuple = ()

    @staticmethod
    def initial(n: int, r: float, gamma: float) -> "DiscreteSearchState":
        if r <= 0 or gamma <= 0:
            raise InvalidInputError("r and gamma must be positive")
        return DiscreteSearchState(
            belief=DiscreteBelief.uniform(n), used=frozenset(), step=0, r=r, gamma=gamma
        )


def top_eigenpair(matrix: np.ndarray) -> tuple[float, np.ndarray]:
    """Dominant eigenpair of a PSD matrix by power iteration.

    Start vector is all-ones with a small axis-0 perturbation; iteration
    runs until the residual ||Av - lv|| drops below 1e-6 * l.  The
    eigenvector sign is fixed so its first non-negligible coordinate is
    positive.
    """
    d = matrix.shape[0]
    v = np.ones(d)
    v[0] += 1e-3
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(POWER_ITER_MAX):
        w = matrix @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0, v
        v = w / norm
        av = matrix @ v
        lam = float(v @ av)
        if np.linalg.norm(av - lam * v) <= POWER_ITER_RESIDUAL * lam:
            break
    nz = np.nonzero(np.abs(v) > 1e-12)[0]
    if nz.size and v[nz[0]] < 0:
        v = -v
    return lam, v


def belief_moments(belief: DiscreteBelief, items: ItemSet) -> tuple[np.ndarray, np.ndarray]:
    """Belief-weighted mean and covariance of the item embedding."""
    p = belief.probs
    mu = p @ items.vectors
    centered = items.vectors - mu
    cov = centered.T @ (centered * p[:, None])
    return mu, cov


def _snap_to_items(
    proto: np.ndarray, belief: DiscreteBelief, items: ItemSet, excluded: set
) -> str:
    """Unused item minimizing belief-weighted distance to the proto-point.

    The weighting divides the distance by the item's posterior mass so
    that near and more probable items win; ties break toward the
    lexicographically smaller id.
    """
    dist = np.linalg.norm(items.vectors - proto, axis=1)
    scores = dist / np.maximum(belief.probs, 1e-300)
    for item_id in excluded:
        scores[items.index_of(item_id)] = np.inf
    best = float(scores.min())
    if not np.isfinite(best):
        return None
    candidates = np.nonzero(scores == best)[0]
    if candidates.size == 1:
        return items.ids[int(candidates[0])]
    return min(items.ids[int(k)] for k in candidates)


def next_query(state: DiscreteSearchState, items: ItemSet) -> tuple[str, str]:
    """Pick the next pair of unused items to show.

    Proto-points straddle the belief mean along the top covariance
    eigenvector at distance r * sqrt(lambda_max); when the belief has
    collapsed (zero variance) the two most probable unused items are
    shown instead.
    """
    unused = [i for i in items.ids if i not in state.used]
    if len(unused) < 2:
        raise ExhaustedError("fewer than 2 unused items remain")
    mu, cov = belief_moments(state.belief, items)
    lam, v = top_eigenpair(cov)
    if lam <= 0.0:
        ranked = sorted(
            unused, key=lambda item_id: (-state.belief.probs[items.index_of(item_id)], item_id)
        )
        return ranked[0], ranked[1]
    shift = state.r * np.sqrt(lam) * v
    z1 = mu + shift
    z2 = mu - shift
    i = _snap_to_items(z1, state.belief, items, set(state.used))
    j = _snap_to_items(z2, state.belief, items, set(state.used) | {i})
    return i, j


def answer_likelihoods(
    items: ItemSet, query: tuple[str, str], answer: str, gamma: float
) -> np.ndarray:
    """P(observed answer | target = each item) under the choice model."""
    i_idx = items.index_of(query[0])
    j_idx = items.index_of(query[1])
    if answer not in query:
        raise InvalidInputError("answer must be one of the query items")
    di = np.linalg.norm(items.vectors - items.vectors[i_idx], axis=1)
    dj = np.linalg.norm(items.vectors - items.vectors[j_idx], axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        delta = np.log(di) - np.log(dj)
        p_i = expit(-gamma * delta)
    both = (di == 0) & (dj == 0)
    if both.any():
        p_i = np.where(both, 0.5, p_i)
    return p_i if answer == query[0] else 1.0 - p_i


def update_posterior(
    state: DiscreteSearchState, items: ItemSet, query: tuple[str, str], answer: str
) -> DiscreteSearchState:
    """Bayes update on one answer; marks both query items as used."""
    lik = answer_likelihoods(items, query, answer, state.gamma)
    posterior = state.belief.probs * lik
    total = posterior.sum()
    if total <= 0:
        raise InvalidInputError("answer has zero likelihood under every item")
    return replace(
        state,
        belief=DiscreteBelief(posterior / total),
        used=state.used | set(query),
        step=state.step + 1,
        history=state.history + ((query, answer),),
    )


@dataclass(frozen=True)
class DiscreteTraceRow:
    step: int
    item_i: str
    item_j: str
    answer: str
    entropy: float
    top1_prob: float


def simulate_answer(
    items: ItemSet, query: tuple[str, str], target_id: str, gamma: float, rng: np.random.Generator
) -> str:
    """Sample which query item the oracle calls closer to the target."""
    i_idx, j_idx = items.index_of(query[0]), items.index_of(query[1])
    t_idx = items.index_of(target_id)
    di = float(np.linalg.norm(items.vectors[i_idx] - items.vectors[t_idx]))
    dj = float(np.linalg.norm(items.vectors[j_idx] - items.vectors[t_idx]))
    if di == 0.0 and dj == 0.0:
        p = 0.5
    elif di == 0.0:
        p = 1.0
    elif dj == 0.0:
        p = 0.0
    else:
        p = float(expit(-gamma * (np.log(di) - np.log(dj))))
    return query[0] if rng.random() < p else query[1]


def run_discrete_search(
    items: ItemSet,
    target_id: str,
    gamma: float,
    r: float,
    max_steps: int,
    rng: np.random.Generator,
    policy: str = "eigen",
) -> tuple[int, list[DiscreteTraceRow]]:
    """Search until the target appears in a displayed pair.

    Returns the number of queries asked (the terminal pair counts) and a
    trace row per step.  ``policy="random"`` replaces the proto-query
    heuristic with uniformly random unused pairs, as a baseline.
    """
    items.index_of(target_id)
    state = DiscreteSearchState.initial(items.n, r=r, gamma=gamma)
    trace: list[DiscreteTraceRow] = []
    while True:
        if state.step >= max_steps:
            raise BudgetExceededError(f"no termination within {max_steps} steps", trace=trace)
        if policy == "random":
            unused = [i for i in items.ids if i not in state.used]
            if len(unused) < 2:
                raise ExhaustedError("fewer than 2 unused items remain")
            pick = rng.choice(len(unused), size=2, replace=False)
            query = (unused[pick[0]], unused[pick[1]])
        else:
            query = next_query(state, items)
        if target_id in query:
            trace.append(
                DiscreteTraceRow(
                    step=state.step + 1,
                    item_i=query[0],
                    item_j=query[1],
                    answer=target_id,
                    entropy=state.belief.entropy(),
                    top1_prob=float(state.belief.probs.max()),
                )
            )
            return state.step + 1, trace
        answer = simulate_answer(items, query, target_id, gamma, rng)
        state = update_posterior(state, items, query, answer)
        trace.append(
            DiscreteTraceRow(
                step=state.step,
                item_i=query[0],
                item_j=query[1],
                answer=answer,
                entropy=state.belief.entropy(),
                top1_prob=float(state.belief.probs.max()),
            )
        )


def eig_score(state: DiscreteSearchState, items: ItemSet, query: tuple[str, str]) -> float:
    """Expected information gain of a candidate pair.

    Reference scorer only: H(P) - E_Y[H(P | Y)] where Y is the answer
    marginalized over the current belief.  Exhaustive use is quadratic in
    n and deliberately not part of the search policy.
    """
    p = state.belief.probs
    lik_i = answer_likelihoods(items, query, query[0], state.gamma)
    p_yi = float((p * lik_i).sum())
    if p_yi <= 0.0 or p_yi >= 1.0:
        return 0.0
    post_i = p * lik_i / p_yi
    post_j = p * (1.0 - lik_i) / (1.0 - p_yi)

    def ent(q):
        q = q[q > 0]
        return float(-(q * np.log(q)).sum())

    return state.belief.entropy() - (p_yi * ent(post_i) + (1 - p_yi) * ent(post_j))
