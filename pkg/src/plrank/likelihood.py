"""Listwise permutation likelihood for linear rerankers.

Each hypothesis list induces a softmax distribution over its candidates
from the linear scores ``H @ w``.  A ranked prefix (the "ground truth"
permutation) is scored by sequential choice: the probability of picking
its first element from the whole list, times the probability of picking
the second from what remains, and so on.  The training objective sums
these log-probabilities over all lists and subtracts a Gaussian penalty
``l2_scale/2 * ||w||^2``; it is concave in ``w`` with an analytic gradient.

All reductions over instances run in a fixed tree order over fixed-size
chunks, so objective and gradient are bit-identical regardless of how many
worker threads evaluate the chunks.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

# instances per evaluation chunk; fixed so the reduction tree never depends
# on the worker count
_CHUNK = 64


@dataclass(frozen=True)
class ListDistribution:
    """Log-probabilities of one list's softmax distribution (they sum to 1)."""

    log_probs: np.ndarray

    @classmethod
    def from_probs(cls, probs: Sequence[float]) -> "ListDistribution":
        p = np.asarray(probs, dtype=float)
        if p.size == 0:
            raise ValueError("empty probability vector")
        return cls(np.log(p))

    def __len__(self) -> int:
        return self.log_probs.size


@dataclass(frozen=True)
class PLInstance:
    """One training instance: dense-indexed features plus the ranked prefix.

    ``order`` lists all row indices with the ranked prefix first; the
    candidates still available at step j are exactly ``order[j:]``.
    """

    sent_id: int
    features: sp.csr_matrix
    ranks: np.ndarray
    order: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n = self.features.shape[0]
        ranks = np.asarray(self.ranks, dtype=np.int64)
        if n == 0:
            raise ValueError(f"sentence {self.sent_id}: empty hypothesis list")
        if not 1 <= ranks.size <= n:
            raise ValueError(f"sentence {self.sent_id}: permutation length {ranks.size} out of range")
        if ranks.min() < 0 or ranks.max() >= n or np.unique(ranks).size != ranks.size:
            raise ValueError(f"sentence {self.sent_id}: invalid permutation indices")
        rest = np.setdiff1d(np.arange(n, dtype=np.int64), ranks)
        object.__setattr__(self, "ranks", ranks)
        object.__setattr__(self, "order", np.concatenate([ranks, rest]))

    @property
    def k(self) -> int:
        return self.ranks.size


def _log_softmax(scores: np.ndarray) -> np.ndarray:
    m = scores.max()
    return scores - (m + math.log(np.exp(scores - m).sum()))


def _suffix_logsumexp(x: np.ndarray) -> np.ndarray:
    """out[j] = logsumexp(x[j:]), computed stably in one backward sweep."""
    return np.logaddexp.accumulate(x[::-1])[::-1]


def list_distribution(features: sp.csr_matrix | np.ndarray, w: np.ndarray) -> ListDistribution:
    """Softmax distribution over one list's hypotheses from scores ``H @ w``."""
    if features.shape[0] == 0:
        raise ValueError("empty hypothesis list")
    scores = np.asarray(features @ w, dtype=float).ravel()
    return ListDistribution(_log_softmax(scores))


def permutation_log_prob(dist: ListDistribution, perm) -> float:
    """Log-probability of drawing ``perm`` by sequential choice without
    replacement from ``dist``.

    ``perm`` may be a Permutation or a plain index sequence.  The step-j
    normalizer is the log-sum-exp of the log-probabilities still available
    at step j (step 1 needs none: the distribution already sums to 1).
    """
    ranks = np.asarray(getattr(perm, "ranks", perm), dtype=np.int64)
    lp = dist.log_probs
    n = lp.size
    if not 1 <= ranks.size <= n:
        raise ValueError(f"permutation length {ranks.size} out of range for a list of {n}")
    if ranks.size and (ranks.min() < 0 or ranks.max() >= n or np.unique(ranks).size != ranks.size):
        raise ValueError("invalid permutation indices")
    rest = np.setdiff1d(np.arange(n, dtype=np.int64), ranks)
    sorted_lp = lp[np.concatenate([ranks, rest])]
    k = ranks.size
    logz = _suffix_logsumexp(sorted_lp)[:k].copy()
    logz[0] = 0.0
    return float(sorted_lp[:k].sum() - logz.sum())


def _choice_terms(scores: np.ndarray, order: np.ndarray, k: int) -> tuple[float, np.ndarray]:
    """Log-likelihood of the ranked prefix plus per-row gradient coefficients.

    Returns (value, contrib) with ``grad = contrib @ H``: each chosen row
    contributes +1, and every row t still available at step j contributes
    -p(t)/Z_j, folded into a single coefficient per row.
    """
    lp = _log_softmax(scores)
    sorted_lp = lp[order]
    logz = _suffix_logsumexp(sorted_lp)[:k].copy()
    logz[0] = 0.0
    value = float(sorted_lp[:k].sum() - logz.sum())
    # row at position q of `order` is available at steps 0..min(q, k-1)
    cum_inv_z = np.cumsum(np.exp(-logz))
    mult = np.full(sorted_lp.size, cum_inv_z[k - 1])
    mult[:k] = cum_inv_z
    contrib = np.empty(sorted_lp.size)
    contrib[order] = -np.exp(sorted_lp) * mult
    contrib[order[:k]] += 1.0
    return value, contrib


class _Chunk:
    """A fixed block of instances evaluated with two sparse matvecs."""

    __slots__ = ("matrix", "bounds", "orders", "ks")

    def __init__(self, instances: Sequence[PLInstance]):
        self.matrix = sp.vstack([inst.features for inst in instances], format="csr")
        sizes = [inst.features.shape[0] for inst in instances]
        self.bounds = np.concatenate([[0], np.cumsum(sizes)])
        self.orders = [inst.order for inst in instances]
        self.ks = [inst.k for inst in instances]

    def evaluate(self, w: np.ndarray) -> tuple[float, np.ndarray]:
        scores = np.asarray(self.matrix @ w).ravel()
        values = np.empty(len(self.ks))
        contrib = np.empty(scores.size)
        for i, (order, k) in enumerate(zip(self.orders, self.ks)):
            lo, hi = self.bounds[i], self.bounds[i + 1]
            values[i], contrib[lo:hi] = _choice_terms(scores[lo:hi], order, k)
        return float(np.sum(values)), np.asarray(contrib @ self.matrix).ravel()


def make_evaluator(
    instances: Sequence[PLInstance], l2_scale: float = 1.0, workers: int = 1
) -> Callable[[np.ndarray], tuple[float, np.ndarray]]:
    """Build a reusable ``w -> (objective, gradient)`` over fixed chunks."""
    chunks = [_Chunk(instances[i : i + _CHUNK]) for i in range(0, len(instances), _CHUNK)]

    def evaluate(w: np.ndarray) -> tuple[float, np.ndarray]:
        w = np.asarray(w, dtype=float)
        if workers > 1 and len(chunks) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(lambda c: c.evaluate(w), chunks))
        else:
            parts = [c.evaluate(w) for c in chunks]
        if parts:
            value = float(np.sum(np.array([p[0] for p in parts])))
            grad = np.sum(np.stack([p[1] for p in parts]), axis=0)
        else:
            value, grad = 0.0, np.zeros_like(w)
        value -= 0.5 * l2_scale * float(w @ w)
        grad = grad - l2_scale * w
        return value, grad

    return evaluate


def objective_and_gradient(
    instances: Sequence[PLInstance], w: np.ndarray, l2_scale: float = 1.0, workers: int = 1
) -> tuple[float, np.ndarray]:
    return make_evaluator(instances, l2_scale, workers)(w)


def objective(
    instances: Sequence[PLInstance], w: np.ndarray, l2_scale: float = 1.0, workers: int = 1
) -> float:
    """Sum of ranked-prefix log-likelihoods minus the Gaussian penalty."""
    return objective_and_gradient(instances, w, l2_scale, workers)[0]


def gradient(
    instances: Sequence[PLInstance], w: np.ndarray, l2_scale: float = 1.0, workers: int = 1
) -> np.ndarray:
    """Analytic gradient of :func:`objective` with respect to ``w``."""
    return objective_and_gradient(instances, w, l2_scale, workers)[1]
