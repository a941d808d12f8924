"""The outer tuning loop: decode, accumulate, resample-if-poor, retrain.

Each round asks a decoder for fresh hypotheses, merges them into the
accumulated corpus (deduplicating), measures feature richness, retrains
from the current weights (resampling lists down when richness is below
threshold), and records the round's dev BLEU of the top-1 reranking.

A decoder is any callable ``(weights, round) -> Corpus`` taking named
weights; feature spaces may grow between rounds, so weights travel by name
at this boundary.  ``SyntheticDecoder`` is a self-contained stand-in whose
hypotheses copy a reference prefix whose length tracks a planted linear
model, so BLEU correlates with the planted score by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from .bleu import ReferenceStats, corpus_bleu
from .corpus import (
    Corpus,
    DataError,
    Hypothesis,
    NBestList,
    ReferenceSet,
    feature_matrix,
    merge,
    weights_vector,
)
from .rng import derive_seed, substream
from .trainer import RICHNESS_THRESHOLD, TrainConfig, richness, train

DecoderInterface = Callable[[Mapping[str, float], int], Corpus]


@dataclass(slots=True)
class TuneConfig:
    train_cfg: TrainConfig
    max_rounds: int = 40
    per_round_size: int = 200
    richness_threshold: float = RICHNESS_THRESHOLD
    resample_m: int = 30
    stop_when_saturated: bool = True

    def __post_init__(self):
        if self.max_rounds < 1:
            raise ValueError(f"max_rounds must be >= 1, got {self.max_rounds}")
        if self.per_round_size < 1:
            raise ValueError(f"per_round_size must be >= 1, got {self.per_round_size}")
        if self.resample_m < 3:
            raise ValueError(f"resample_m must be >= 3, got {self.resample_m}")


@dataclass(frozen=True, slots=True)
class RoundRecord:
    round: int
    dev_bleu: float
    objective: float
    corpus_size: int
    richness: float


@dataclass(slots=True)
class SyntheticDecoderSpec:
    """Generator settings for the synthetic decoder.

    ``latent_weights`` is the planted model; when omitted it is drawn
    standard-normal from ``seed``.  Each hypothesis activates
    ``features_per_hyp`` random features with standard-normal values, and
    its token sequence copies a reference prefix whose length is monotone
    in the rank of ``latent . h + noise_scale * eps`` within the list, so
    longer prefixes (higher BLEU) mean higher planted score.
    """

    num_sentences: int
    feature_dim: int
    noise_scale: float = 0.1
    seed: int = 0
    ref_len: int = 20
    features_per_hyp: int = 8
    latent_weights: np.ndarray | None = None

    def __post_init__(self):
        if self.num_sentences < 1:
            raise ValueError(f"num_sentences must be >= 1, got {self.num_sentences}")
        if self.feature_dim < 1:
            raise ValueError(f"feature_dim must be >= 1, got {self.feature_dim}")
        if self.noise_scale < 0:
            raise ValueError(f"noise_scale must be >= 0, got {self.noise_scale}")
        if self.ref_len < 1:
            raise ValueError(f"ref_len must be >= 1, got {self.ref_len}")
        if not 1 <= self.features_per_hyp <= self.feature_dim:
            raise ValueError("features_per_hyp must be in [1, feature_dim]")
        if self.latent_weights is None:
            self.latent_weights = substream(self.seed, "latent").standard_normal(self.feature_dim)
        else:
            self.latent_weights = np.asarray(self.latent_weights, dtype=float)
            if self.latent_weights.shape != (self.feature_dim,):
                raise ValueError("latent_weights must have length feature_dim")


def synthetic_references(spec: SyntheticDecoderSpec) -> ReferenceSet:
    """One fixed reference of ref_len tokens per sentence id 0..num_sentences-1."""
    return ReferenceSet(
        {
            sid: (tuple(f"s{sid}w{j}" for j in range(spec.ref_len)),)
            for sid in range(spec.num_sentences)
        }
    )


def synthetic_decode(
    spec: SyntheticDecoderSpec,
    refs: ReferenceSet,
    weights: Mapping[str, float],
    round_idx: int,
    size: int,
) -> Corpus:
    """Draw ``size`` hypotheses per sentence, deterministic in (seed, round).

    Hypothesis j copies the first ``l`` tokens of the sentence's first
    reference, where ``l`` grows with the within-list rank of the planted
    score, and pads to reference length with tokens unique to (sentence,
    round, hypothesis); so every list spans the quality range and sentence
    BLEU is strictly monotone in the prefix length.
    """
    sids = sorted(refs.sent_ids())
    if len(sids) < spec.num_sentences:
        raise DataError(
            f"references cover {len(sids)} sentences, spec needs {spec.num_sentences}"
        )
    lists = []
    for sid in sids[: spec.num_sentences]:
        ref = refs[sid][0]
        length = len(ref)
        rng = substream(spec.seed, "decode", round_idx, sid)
        features = []
        planted = np.empty(size)
        for j in range(size):
            active = np.sort(rng.choice(spec.feature_dim, spec.features_per_hyp, replace=False))
            values = rng.standard_normal(spec.features_per_hyp)
            planted[j] = spec.latent_weights[active] @ values
            features.append({f"f{i}": float(v) for i, v in zip(active, values)})
        quality = planted + spec.noise_scale * rng.standard_normal(size)
        rank_of = np.empty(size, dtype=np.int64)
        rank_of[np.argsort(-quality, kind="stable")] = np.arange(size)
        hyps = []
        for j in range(size):
            if size == 1:
                prefix = length
            else:
                prefix = (length * (size - 1 - rank_of[j])) // (size - 1)
            tokens = ref[:prefix] + tuple(
                f"x{sid}r{round_idx}h{j}p{t}" for t in range(prefix, length)
            )
            score = sum(weights.get(name, 0.0) * v for name, v in features[j].items())
            hyps.append(Hypothesis(sid, tokens, features[j], score))
        lists.append(NBestList(sid, tuple(hyps)))
    return Corpus.from_lists(lists)


class SyntheticDecoder:
    """DecoderInterface over :func:`synthetic_decode`."""

    def __init__(self, spec: SyntheticDecoderSpec, refs: ReferenceSet, per_round_size: int):
        self.spec = spec
        self.refs = refs
        self.per_round_size = per_round_size

    def __call__(self, weights: Mapping[str, float], round_idx: int) -> Corpus:
        return synthetic_decode(self.spec, self.refs, weights, round_idx, self.per_round_size)


def rerank(corpus: Corpus, w: np.ndarray, top: int = 1) -> list[NBestList]:
    """Stable-sort each list by ``h . w`` descending and keep the top few;
    ties keep their input order."""
    if top < 1:
        raise ValueError(f"top must be >= 1, got {top}")
    out = []
    for lst in corpus.lists:
        scores = np.asarray(feature_matrix(lst.hypotheses, corpus.feature_index) @ w).ravel()
        order = np.argsort(-scores, kind="stable")[:top]
        out.append(NBestList(lst.sent_id, tuple(lst.hypotheses[i] for i in order)))
    return out


def _top1_corpus_bleu(corpus: Corpus, w: np.ndarray, refs: ReferenceSet) -> float:
    total = None
    for lst in rerank(corpus, w, top=1):
        stats = ReferenceStats(refs[lst.sent_id]).stats_for(lst.hypotheses[0].tokens)
        total = stats if total is None else total + stats
    return 100.0 * corpus_bleu(total)


def run_tuning(
    decoder: DecoderInterface,
    refs: ReferenceSet,
    cfg: TuneConfig,
    w0: Mapping[str, float] | None = None,
) -> tuple[dict[str, float], list[RoundRecord]]:
    """Run up to max_rounds of decode / merge / (resample) / retrain.

    Returns the final weights by feature name and one record per completed
    round.  Stops early (when enabled) as soon as a round contributes no
    new hypothesis.  Raises DataError if round 1 produces an empty corpus.
    """
    named: dict[str, float] = dict(w0) if w0 else {}
    accumulated: Corpus | None = None
    records: list[RoundRecord] = []
    for round_idx in range(1, cfg.max_rounds + 1):
        fresh = decoder(named, round_idx)
        if round_idx == 1:
            if fresh.total_hypotheses() == 0:
                raise DataError("decoder produced no hypotheses on round 1")
            accumulated = fresh
        else:
            before = accumulated.total_hypotheses()
            accumulated = merge(accumulated, fresh)
            if cfg.stop_when_saturated and accumulated.total_hypotheses() == before:
                break
        rich = richness(accumulated)
        sample = cfg.resample_m if rich.r < cfg.richness_threshold else cfg.train_cfg.sample_size
        round_cfg = replace(
            cfg.train_cfg,
            sample_size=sample,
            seed=derive_seed(cfg.train_cfg.seed, "round", round_idx),
        )
        w_start, _ = weights_vector(named, accumulated.feature_index)
        report = train(accumulated, refs, round_cfg, w_start)
        w = report.final_weights
        named = {name: float(w[idx]) for name, idx in accumulated.feature_index.items()}
        records.append(
            RoundRecord(
                round_idx,
                _top1_corpus_bleu(accumulated, w, refs),
                report.final_objective,
                accumulated.total_hypotheses(),
                rich.r,
            )
        )
    return named, records
