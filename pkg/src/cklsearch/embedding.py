"""Triplet-embedding learning under the scale-free choice model.

Items get coordinates by maximizing the likelihood of observed
comparison outcomes ("i was judged closer to t than j").  The loss is
the mean negative log likelihood of the choice model plus an optional
L2 penalty; optimization is plain mini-batch gradient descent with a
constant learning rate.  Because the model depends only on distance
ratios, the unpenalized loss is invariant to translating or rescaling
the whole embedding.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_expit

from .errors import InvalidInputError, TrainingDivergedError

DIST_CLAMP = 1e-12


@dataclass(frozen=True)
class Triplet:
    """One comparison outcome: ``winner`` beat ``loser`` w.r.t. ``target``."""

    winner: str
    loser: str
    target: str

    def __post_init__(self):
        if self.winner == self.loser:
            raise InvalidInputError("winner and loser must differ")


@dataclass(frozen=True)
class TrainConfig:
    dim: int
    gamma: float
    learning_rate: float = 0.05
    batch_size: int = 128
    l2_lambda: float = 0.0
    epochs: int = 200
    folds: int = 10
    seed: int = 0

    def __post_init__(self):
        if min(self.dim, self.batch_size, self.epochs + 1) < 1 or self.gamma <= 0:
            raise InvalidInputError("dim, gamma, batch_size must be positive")
        if self.learning_rate <= 0:
            raise InvalidInputError("learning rate must be positive")
        if self.l2_lambda < 0:
            raise InvalidInputError("l2_lambda must be non-negative")


@dataclass(frozen=True)
class Embedding:
    """Learned coordinates for a fixed item vocabulary."""

    ids: tuple
    matrix: np.ndarray  # (n, d)

    def __post_init__(self):
        if len(set(self.ids)) != len(self.ids):
            raise InvalidInputError("ids must be unique")
        m = np.asarray(self.matrix, dtype=float)
        if m.shape[0] != len(self.ids):
            raise InvalidInputError("matrix rows must match ids")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "_index", {i: k for k, i in enumerate(self.ids)})

    def vector(self, item_id: str) -> np.ndarray:
        return self.matrix[self._index[item_id]]

    def to_manifest(self) -> list:
        return [
            {"id": i, "vector": [float(v) for v in self.matrix[k]]}
            for k, i in enumerate(self.ids)
        ]


def vocabulary(triplets) -> tuple:
    """Sorted ids appearing anywhere in the triplet list."""
    ids = set()
    for t in triplets:
        ids.update((t.winner, t.loser, t.target))
    return tuple(sorted(ids))


def _triplet_indices(triplets, index: dict) -> np.ndarray:
    try:
        return np.array(
            [[index[t.winner], index[t.loser], index[t.target]] for t in triplets],
            dtype=np.int64,
        )
    except KeyError as err:
        raise InvalidInputError(f"triplet references unknown id {err.args[0]!r}") from None


def nll_and_gradient(
    emb: Embedding, batch, gamma: float, l2_lambda: float = 0.0
) -> tuple[float, np.ndarray]:
    """Mean negative log likelihood of a batch and its exact gradient.

    Winner, loser and reference vectors all receive gradient; distances
    are clamped below to keep the log finite for coincident points.
    """
    if len(batch) == 0:
        raise InvalidInputError("batch must be non-empty")
    idx = _triplet_indices(batch, emb._index)
    x = emb.matrix
    wi, lo, tg = idx[:, 0], idx[:, 1], idx[:, 2]
    n = len(batch)
    with np.errstate(over="ignore", invalid="ignore"):
        diff_w = x[wi] - x[tg]
        diff_l = x[lo] - x[tg]
        d_w = np.maximum(np.linalg.norm(diff_w, axis=1), DIST_CLAMP)
        d_l = np.maximum(np.linalg.norm(diff_l, axis=1), DIST_CLAMP)
        delta = np.log(d_w) - np.log(d_l)
        # p(winner) = expit(-gamma * delta); loss = -log p
        losses = -log_expit(-gamma * delta)
        coef = gamma * expit(gamma * delta)  # = gamma * (1 - p)
        grad_w = (coef / (d_w * d_w))[:, None] * diff_w / n
        grad_l = -(coef / (d_l * d_l))[:, None] * diff_l / n
        grad = np.zeros_like(x)
        np.add.at(grad, wi, grad_w)
        np.add.at(grad, lo, grad_l)
        np.add.at(grad, tg, -(grad_w + grad_l))
        loss = float(losses.mean())
        if l2_lambda:
            loss += l2_lambda * float((x * x).sum())
            grad += 2.0 * l2_lambda * x
    return loss, grad


def fit(triplets, config: TrainConfig, rng: np.random.Generator) -> Embedding:
    """Mini-batch gradient descent from a small Gaussian initialization."""
    if not triplets:
        raise InvalidInputError("need at least one triplet")
    ids = vocabulary(triplets)
    matrix = rng.normal(scale=0.1, size=(len(ids), config.dim))
    emb = Embedding(ids=ids, matrix=matrix)
    n = len(triplets)
    order = np.arange(n)
    for epoch in range(config.epochs):
        rng.shuffle(order)
        for start in range(0, n, config.batch_size):
            batch = [triplets[k] for k in order[start : start + config.batch_size]]
            loss, grad = nll_and_gradient(emb, batch, config.gamma, config.l2_lambda)
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}", epoch=epoch
                )
            emb = Embedding(ids=ids, matrix=emb.matrix - config.learning_rate * grad)
    return emb


def predict_probability(emb: Embedding, triplet: Triplet, gamma: float) -> float:
    """Model probability that the recorded winner beats the loser."""
    xw = emb.vector(triplet.winner)
    xl = emb.vector(triplet.loser)
    xt = emb.vector(triplet.target)
    d_w = max(float(np.linalg.norm(xw - xt)), DIST_CLAMP)
    d_l = max(float(np.linalg.norm(xl - xt)), DIST_CLAMP)
    return float(expit(-gamma * (np.log(d_w) - np.log(d_l))))


def evaluate_accuracy(emb: Embedding, holdout, gamma: float) -> float:
    """Fraction of holdout triplets the embedding predicts correctly.

    An exact 1/2 probability counts half, the expected accuracy of a
    coin flip.
    """
    if not holdout:
        raise InvalidInputError("holdout must be non-empty")
    idx = _triplet_indices(holdout, emb._index)
    x = emb.matrix
    d_w = np.maximum(np.linalg.norm(x[idx[:, 0]] - x[idx[:, 2]], axis=1), DIST_CLAMP)
    d_l = np.maximum(np.linalg.norm(x[idx[:, 1]] - x[idx[:, 2]], axis=1), DIST_CLAMP)
    p = expit(-gamma * (np.log(d_w) - np.log(d_l)))
    score = np.where(p > 0.5, 1.0, np.where(p == 0.5, 0.5, 0.0))
    return float(score.mean())


@dataclass(frozen=True)
class CrossValidationResult:
    fold_accuracies: tuple
    mean_accuracy: float


def cross_validate(triplets, config: TrainConfig, rng: np.random.Generator) -> CrossValidationResult:
    """K-fold evaluation: shuffle once, hold out each contiguous fold."""
    if config.folds < 2:
        raise InvalidInputError("need at least 2 folds")
    if config.folds > len(triplets):
        raise InvalidInputError("more folds than triplets")
    order = np.arange(len(triplets))
    rng.shuffle(order)
    folds = np.array_split(order, config.folds)
    accs = []
    for held in folds:
        held_set = set(held.tolist())
        train = [triplets[k] for k in order if k not in held_set]
        test = [triplets[k] for k in held]
        emb = fit(train, config, np.random.default_rng(rng.integers(2**63)))
        accs.append(evaluate_accuracy(emb, test, config.gamma))
    return CrossValidationResult(
        fold_accuracies=tuple(accs), mean_accuracy=float(np.mean(accs))
    )


def read_triplets_csv(path) -> list:
    """Read triplets from CSV with header ``i,j,t``: i beat j w.r.t. t."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["i", "j", "t"]:
            raise InvalidInputError("triplet CSV must have header i,j,t")
        for row in reader:
            out.append(Triplet(winner=row["i"], loser=row["j"], target=row["t"]))
    return out


def write_triplets_csv(path, triplets) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["i", "j", "t"])
        for t in triplets:
            writer.writerow([t.winner, t.loser, t.target])


def sample_synthetic_triplets(
    emb: Embedding, n_triplets: int, gamma: float, rng: np.random.Generator
) -> list:
    """Draw comparison outcomes from a ground-truth embedding."""
    n = len(emb.ids)
    out = []
    for _ in range(n_triplets):
        i, j, t = rng.choice(n, size=3, replace=False)
        d_i = max(float(np.linalg.norm(emb.matrix[i] - emb.matrix[t])), DIST_CLAMP)
        d_j = max(float(np.linalg.norm(emb.matrix[j] - emb.matrix[t])), DIST_CLAMP)
        p_i = float(expit(-gamma * (np.log(d_i) - np.log(d_j))))
        if rng.random() < p_i:
            out.append(Triplet(emb.ids[i], emb.ids[j], emb.ids[t]))
        else:
            out.append(Triplet(emb.ids[j], emb.ids[i], emb.ids[t]))
    return out


def oracle_ceiling(truth: Embedding, holdout, gamma: float) -> float:
    """Mean max(p, 1-p) of the generating embedding over a holdout: the
    best accuracy any model can reach on data sampled from it."""
    idx = _triplet_indices(holdout, truth._index)
    x = truth.matrix
    d_w = np.maximum(np.linalg.norm(x[idx[:, 0]] - x[idx[:, 2]], axis=1), DIST_CLAMP)
    d_l = np.maximum(np.linalg.norm(x[idx[:, 1]] - x[idx[:, 2]], axis=1), DIST_CLAMP)
    p = expit(-gamma * (np.log(d_w) - np.log(d_l)))
    return float(np.maximum(p, 1 - p).mean())
