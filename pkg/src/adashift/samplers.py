"""Acquisition strategies for querying unlabeled target samples.

All strategies are pure functions of an `AcquisitionInput` snapshot and a
seeded generator: returned ids are distinct, drawn from the pool, and
deterministic given (pool, seed). Ties break by ascending sample id.

Domain-probability convention: `domain_prob_source` is the probability the
domain classifier assigns to "this sample came from the source domain".
Flipping that convention inverts the adversarial sampler's diversity weight.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DOMAIN_PROB_CLAMP = 1e-6  # the (1-d)/d ratio is singular at d=0
_PROB_FLOOR = 1e-12


@dataclass
class AcquisitionInput:
    """Per-sample model snapshot over an unlabeled pool."""

    ids: list[str]
    features: np.ndarray
    class_probs: np.ndarray
    domain_prob_source: np.ndarray | None = None

    def __post_init__(self):
        self.ids = [str(i) for i in self.ids]
        self.features = np.asarray(self.features, dtype=np.float64)
        self.class_probs = np.asarray(self.class_probs, dtype=np.float64)
        n = len(self.ids)
        if len(set(self.ids)) != n:
            raise ValueError("sample ids must be unique")
        if self.features.shape[0] != n or self.class_probs.shape[0] != n:
            raise ValueError("ids, features and class_probs must align")
        if np.any(self.class_probs < -1e-12) or np.any(self.class_probs > 1 + 1e-12):
            raise ValueError("class probabilities outside [0,1]")
        if np.any(np.abs(self.class_probs.sum(axis=1) - 1.0) > 1e-9):
            raise ValueError("class probability rows must sum to 1")
        if self.domain_prob_source is not None:
            self.domain_prob_source = np.asarray(self.domain_prob_source, dtype=np.float64)
            if self.domain_prob_source.shape[0] != n:
                raise ValueError("domain probabilities must align with ids")

    def __len__(self):
        return len(self.ids)


@dataclass(frozen=True)
class QuerySet:
    ids: tuple[str, ...]
    strategy: str
    round_index: int = 0

    def __post_init__(self):
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("query ids must be distinct")


def entropy(p) -> float:
    """Shannon entropy -sum(p ln p) of one probability vector."""
    p = np.asarray(p, dtype=np.float64)
    if np.any(p < 0):
        raise ValueError("probabilities must be non-negative")
    if abs(p.sum() - 1.0) > 1e-6:
        raise ValueError("probabilities must sum to 1")
    q = np.clip(p, _PROB_FLOOR, 1.0)
    return float(-(p * np.log(q)).sum())


def row_entropy(probs: np.ndarray) -> np.ndarray:
    q = np.clip(probs, _PROB_FLOOR, 1.0)
    return -(probs * np.log(q)).sum(axis=1)


def score_aada(d: float, p) -> float:
    """Adversarial acquisition score: ((1-d)/d) * entropy(p).

    d is clamped away from {0,1} before the ratio. Strictly decreasing in d
    when entropy(p) > 0; strictly increasing in entropy for fixed d.
    """
    d = float(np.clip(d, DOMAIN_PROB_CLAMP, 1.0 - DOMAIN_PROB_CLAMP))
    return (1.0 - d) / d * entropy(p)


def _aada_scores(inputs: AcquisitionInput) -> np.ndarray:
    if inputs.domain_prob_source is None:
        raise ValueError("adversarial sampling needs domain probabilities")
    d = np.clip(inputs.domain_prob_source, DOMAIN_PROB_CLAMP, 1.0 - DOMAIN_PROB_CLAMP)
    return (1.0 - d) / d * row_entropy(inputs.class_probs)


def _ordered_by(inputs: AcquisitionInput, scores: np.ndarray) -> list[int]:
    return sorted(range(len(inputs)), key=lambda i: (-scores[i], inputs.ids[i]))


def select_uniform(inputs: AcquisitionInput, budget: int, rng: np.random.Generator,
                   round_index: int = 0) -> QuerySet:
    if len(inputs) == 0:
        raise ValueError("cannot sample from an empty pool")
    k = min(budget, len(inputs))
    picked = rng.choice(len(inputs), size=k, replace=False)
    return QuerySet(tuple(inputs.ids[i] for i in picked), "uniform", round_index)


def select_aada(inputs: AcquisitionInput, budget: int, mode: str = "top",
                rng: np.random.Generator | None = None, round_index: int = 0) -> QuerySet:
    """Top-budget ids by the adversarial score (default), or sampled
    proportionally to it when mode="proportional"."""
    if len(inputs) == 0:
        raise ValueError("cannot sample from an empty pool")
    scores = _aada_scores(inputs)
    k = min(budget, len(inputs))
    if mode == "top":
        order = _ordered_by(inputs, scores)
        picked = order[:k]
    elif mode == "proportional":
        if rng is None:
            raise ValueError("proportional mode needs a generator")
        picked = _weighted_draw(scores, k, rng)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return QuerySet(tuple(inputs.ids[i] for i in picked), "aada", round_index)


def _weighted_draw(weights: np.ndarray, k: int, rng: np.random.Generator) -> list[int]:
    weights = weights.copy()
    picked: list[int] = []
    for _ in range(k):
        total = weights.sum()
        if total <= 0:
            remaining = [i for i in range(len(weights)) if i not in set(picked)]
            picked.extend(remaining[: k - len(picked)])
            break
        idx = int(rng.choice(len(weights), p=weights / total))
        picked.append(idx)
        weights[idx] = 0.0
    return picked


def select_clue(inputs: AcquisitionInput, budget: int, temperature: float = 1.0,
                seed: int = 0, round_index: int = 0) -> QuerySet:
    """Uncertainty-weighted k-means: cluster features with per-sample entropy
    weights (budget clusters) and return the sample nearest each centroid.

    Degenerate pools (all features identical) fall back to entropy top-budget;
    when every sample is fully confident (all weights zero) the weights fall
    back to uniform.
    """
    n = len(inputs)
    if n < budget:
        raise ValueError("pool smaller than budget")
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    probs = inputs.class_probs
    if temperature != 1.0:
        logp = np.log(np.clip(probs, _PROB_FLOOR, 1.0)) / temperature
        logp -= logp.max(axis=1, keepdims=True)
        probs = np.exp(logp)
        probs /= probs.sum(axis=1, keepdims=True)
    weights = row_entropy(probs)

    feats = inputs.features
    if np.all(feats == feats[0]):
        order = _ordered_by(inputs, row_entropy(inputs.class_probs))
        return QuerySet(tuple(inputs.ids[i] for i in order[:budget]), "clue", round_index)
    if weights.sum() <= _PROB_FLOOR:
        weights = np.ones(n)

    rng = np.random.default_rng(seed)
    assign, centroids = _weighted_kmeans(feats, weights, budget, rng)

    chosen: list[int] = []
    taken: set[int] = set()
    for c in range(budget):
        d2 = np.sum((feats - centroids[c]) ** 2, axis=1)
        order = sorted(range(n), key=lambda i: (d2[i], inputs.ids[i]))
        for i in order:
            if i not in taken:
                chosen.append(i)
                taken.add(i)
                break
    return QuerySet(tuple(inputs.ids[i] for i in chosen), "clue", round_index)


def _weighted_kmeans(feats: np.ndarray, weights: np.ndarray, k: int,
                     rng: np.random.Generator, max_iter: int = 50):
    n = feats.shape[0]
    centroids = feats[_kmeanspp_indices(feats, weights, k, rng)].copy()
    assign = np.full(n, -1)
    for _ in range(max_iter):
        d2 = _pairwise_sq(feats, centroids)
        new_assign = d2.argmin(axis=1)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for c in range(k):
            mask = assign == c
            wsum = weights[mask].sum()
            if wsum > 0:
                centroids[c] = (weights[mask, None] * feats[mask]).sum(axis=0) / wsum
            else:
                # reseed an empty/zero-weight cluster at the worst-covered point
                far = (weights * d2.min(axis=1)).argmax()
                centroids[c] = feats[far]
    return assign, centroids


def _kmeanspp_indices(feats: np.ndarray, weights: np.ndarray, k: int,
                      rng: np.random.Generator) -> list[int]:
    n = feats.shape[0]
    first = int(rng.choice(n, p=weights / weights.sum()))
    picked = [first]
    d2 = np.sum((feats - feats[first]) ** 2, axis=1)
    while len(picked) < k:
        w = weights * d2
        total = w.sum()
        if total <= 0:
            for i in range(n):
                if i not in set(picked):
                    picked.append(i)
                    if len(picked) == k:
                        break
            break
        nxt = int(rng.choice(n, p=w / total))
        picked.append(nxt)
        d2 = np.minimum(d2, np.sum((feats - feats[nxt]) ** 2, axis=1))
    return picked


def _pairwise_sq(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2)


def badge_embeddings(inputs: AcquisitionInput) -> np.ndarray:
    """Last-layer cross-entropy gradients under the pseudo-label argmax(p):
    (p - onehot(argmax p)) outer features, flattened per sample."""
    p = inputs.class_probs
    n, k = p.shape
    residual = p.copy()
    residual[np.arange(n), p.argmax(axis=1)] -= 1.0
    return (residual[:, :, None] * inputs.features[:, None, :]).reshape(n, -1)


def select_badge(inputs: AcquisitionInput, budget: int, rng: np.random.Generator,
                 round_index: int = 0) -> QuerySet:
    """k-means++ seeding over gradient embeddings, with the origin as an
    implicit starting centroid: the first pick is proportional to the squared
    embedding norm, later picks to the squared distance from the chosen set.
    Zero-gradient samples (fully confident) carry zero weight throughout, so
    they are only selected once every informative sample is exhausted."""
    n = len(inputs)
    if n < budget:
        raise ValueError("pool smaller than budget")
    emb = badge_embeddings(inputs)
    d2 = np.sum(emb * emb, axis=1)
    picked: list[int] = []
    available = np.ones(n, dtype=bool)
    for _ in range(budget):
        w = np.where(available, d2, 0.0)
        total = w.sum()
        if total <= 0:
            leftovers = sorted(np.flatnonzero(available), key=lambda i: inputs.ids[i])
            for i in leftovers[: budget - len(picked)]:
                picked.append(int(i))
                available[i] = False
            break
        idx = int(rng.choice(n, p=w / total))
        picked.append(idx)
        available[idx] = False
        d2 = np.minimum(d2, np.sum((emb - emb[idx]) ** 2, axis=1))
    return QuerySet(tuple(inputs.ids[i] for i in picked), "badge", round_index)


STRATEGIES = ("uniform", "aada", "clue", "badge")
