"""N-best lists, references, weights, and the line formats they travel in.

An N-best file holds one hypothesis per line:

    <sent_id> ||| <token> <token> ... ||| <name>=<value> ... ||| <score>

Lines are grouped by ``sent_id`` (input order is preserved inside each
group, and groups appear in first-occurrence order).  A reference file
holds one reference per line, repeating a ``sent_id`` for multiple
references:

    <sent_id> ||| <token> <token> ...

A weights file holds one ``<feature_name>\\t<value>`` per line, sorted by
feature name.  Floats are always rendered with :func:`format_float`, the
shortest decimal string that parses back to the same double, so parsing
followed by writing reproduces a canonically formatted file byte for byte.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

FIELD_SEP = " ||| "


class ParseError(ValueError):
    """A malformed input line; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class DataError(ValueError):
    """Inputs are individually well-formed but mutually inconsistent."""


@dataclass(frozen=True, slots=True)
class Hypothesis:
    """One candidate translation with its sparse feature vector.

    Features absent from ``features`` are implicitly zero.  ``features``
    preserves the order in which names appeared on the input line.
    """

    sent_id: int
    tokens: tuple[str, ...]
    features: dict[str, float]
    decoder_score: float


@dataclass(frozen=True, slots=True)
class NBestList:
    sent_id: int
    hypotheses: tuple[Hypothesis, ...]

    def __len__(self) -> int:
        return len(self.hypotheses)


@dataclass(frozen=True, slots=True)
class Corpus:
    """A set of N-best lists plus the name <-> dense-index feature bijection.

    ``feature_index`` maps each feature name appearing anywhere in the
    corpus to a 0-based dense index, assigned in first-appearance order.
    """

    lists: tuple[NBestList, ...]
    feature_index: dict[str, int]

    @classmethod
    def from_lists(cls, lists: Iterable[NBestList]) -> "Corpus":
        lists = tuple(lists)
        index: dict[str, int] = {}
        for lst in lists:
            for hyp in lst.hypotheses:
                for name in hyp.features:
                    if name not in index:
                        index[name] = len(index)
        return cls(lists, index)

    def total_hypotheses(self) -> int:
        return sum(len(lst) for lst in self.lists)


@dataclass(frozen=True, slots=True)
class ReferenceSet:
    """References per sentence: sent_id -> one or more token sequences."""

    by_sent: dict[int, tuple[tuple[str, ...], ...]]

    def __contains__(self, sent_id: int) -> bool:
        return sent_id in self.by_sent

    def __getitem__(self, sent_id: int) -> tuple[tuple[str, ...], ...]:
        return self.by_sent[sent_id]

    def sent_ids(self) -> list[int]:
        return list(self.by_sent)


def format_float(value: float) -> str:
    """Shortest decimal string that round-trips to the same double."""
    return repr(float(value))


def _parse_sent_id(text: str, line_no: int) -> int:
    try:
        sent_id = int(text)
    except ValueError:
        raise ParseError(line_no, f"sentence id {text!r} is not an integer") from None
    if sent_id < 0:
        raise ParseError(line_no, f"sentence id {sent_id} is negative")
    return sent_id


def _parse_number(text: str, line_no: int, what: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(line_no, f"{what} {text!r} is not a number") from None
    if not math.isfinite(value):
        raise ParseError(line_no, f"{what} {text!r} is not finite")
    return value


def _lines(stream: str | Iterable[str]) -> Iterable[str]:
    return stream.splitlines() if isinstance(stream, str) else stream


def parse_nbest(stream: str | Iterable[str]) -> Corpus:
    """Parse N-best lines into a Corpus.

    Raises ParseError (with the offending line number) on a line that does
    not have exactly four ``|||`` fields, on a non-numeric feature value or
    score, and on a feature name repeated within one line.
    """
    order: list[int] = []
    grouped: dict[int, list[Hypothesis]] = {}
    index: dict[str, int] = {}
    for line_no, raw in enumerate(_lines(stream), start=1):
        line = raw.rstrip("\n")
        fields = [f.strip() for f in line.split("|||")]
        if len(fields) != 4:
            raise ParseError(line_no, f"expected 4 '|||'-separated fields, got {len(fields)}")
        sent_id = _parse_sent_id(fields[0], line_no)
        tokens = tuple(fields[1].split())
        features: dict[str, float] = {}
        if fields[2]:
            for item in fields[2].split():
                name, eq, value = item.partition("=")
                if not eq or not name:
                    raise ParseError(line_no, f"feature {item!r} is not <name>=<value>")
                if name in features:
                    raise ParseError(line_no, f"duplicate feature {name!r}")
                features[name] = _parse_number(value, line_no, f"feature {name!r} value")
        score = _parse_number(fields[3], line_no, "decoder score")
        for name in features:
            if name not in index:
                index[name] = len(index)
        if sent_id not in grouped:
            grouped[sent_id] = []
            order.append(sent_id)
        grouped[sent_id].append(Hypothesis(sent_id, tokens, features, score))
    lists = tuple(NBestList(sid, tuple(grouped[sid])) for sid in order)
    return Corpus(lists, index)


def write_nbest(corpus: Corpus) -> str:
    """Render a Corpus back into N-best lines (inverse of parse_nbest)."""
    out: list[str] = []
    for lst in corpus.lists:
        for hyp in lst.hypotheses:
            feats = " ".join(f"{name}={format_float(v)}" for name, v in hyp.features.items())
            out.append(
                FIELD_SEP.join(
                    [str(hyp.sent_id), " ".join(hyp.tokens), feats, format_float(hyp.decoder_score)]
                )
            )
    return "".join(line + "\n" for line in out)


def parse_refs(stream: str | Iterable[str]) -> ReferenceSet:
    """Parse reference lines (``sent_id ||| tokens``) into a ReferenceSet."""
    by_sent: dict[int, list[tuple[str, ...]]] = {}
    for line_no, raw in enumerate(_lines(stream), start=1):
        line = raw.rstrip("\n")
        fields = [f.strip() for f in line.split("|||")]
        if len(fields) != 2:
            raise ParseError(line_no, f"expected 2 '|||'-separated fields, got {len(fields)}")
        sent_id = _parse_sent_id(fields[0], line_no)
        by_sent.setdefault(sent_id, []).append(tuple(fields[1].split()))
    return ReferenceSet({sid: tuple(refs) for sid, refs in by_sent.items()})


def dedup(lst: NBestList) -> NBestList:
    """Drop hypotheses whose token sequence already occurred, keeping the first."""
    seen: set[tuple[str, ...]] = set()
    kept: list[Hypothesis] = []
    for hyp in lst.hypotheses:
        if hyp.tokens not in seen:
            seen.add(hyp.tokens)
            kept.append(hyp)
    if len(kept) == len(lst.hypotheses):
        return lst
    return NBestList(lst.sent_id, tuple(kept))


def merge(a: Corpus, b: Corpus) -> Corpus:
    """Union of two corpora: per sentence, a's hypotheses then b's, deduplicated.

    The feature index is rebuilt from the surviving hypotheses in scan
    order, so equal hypothesis sets always yield equal indices.
    """
    order: list[int] = [lst.sent_id for lst in a.lists]
    grouped: dict[int, list[Hypothesis]] = {lst.sent_id: list(lst.hypotheses) for lst in a.lists}
    for lst in b.lists:
        if lst.sent_id not in grouped:
            grouped[lst.sent_id] = []
            order.append(lst.sent_id)
        grouped[lst.sent_id].extend(lst.hypotheses)
    lists = (dedup(NBestList(sid, tuple(grouped[sid]))) for sid in order)
    return Corpus.from_lists(lists)


def feature_matrix(
    hypotheses: Sequence[Hypothesis], feature_index: Mapping[str, int]
) -> sp.csr_matrix:
    """Stack sparse feature vectors into an N x F CSR matrix of dense indices."""
    indptr = [0]
    indices: list[int] = []
    data: list[float] = []
    for hyp in hypotheses:
        for name, value in hyp.features.items():
            idx = feature_index.get(name)
            if idx is not None:
                indices.append(idx)
                data.append(value)
        indptr.append(len(indices))
    return sp.csr_matrix(
        (np.asarray(data), np.asarray(indices, dtype=np.int64), np.asarray(indptr, dtype=np.int64)),
        shape=(len(hypotheses), len(feature_index)),
    )


def parse_weights(stream: str | Iterable[str]) -> dict[str, float]:
    """Read a tab-separated weights file into a name -> value mapping."""
    named: dict[str, float] = {}
    for line_no, raw in enumerate(_lines(stream), start=1):
        line = raw.rstrip("\n")
        name, tab, value = line.partition("\t")
        if not tab or not name:
            raise ParseError(line_no, "expected <feature_name>\\t<value>")
        if name in named:
            raise ParseError(line_no, f"duplicate feature {name!r}")
        named[name] = _parse_number(value, line_no, f"weight {name!r}")
    return named


def format_weights(feature_index: Mapping[str, int], values: np.ndarray) -> str:
    """Render a dense weight vector as a weights file, sorted by feature name."""
    lines = [
        f"{name}\t{format_float(values[idx])}" for name, idx in sorted(feature_index.items())
    ]
    return "".join(line + "\n" for line in lines)


def weights_vector(
    named: Mapping[str, float], feature_index: Mapping[str, int]
) -> tuple[np.ndarray, list[str]]:
    """Align named weights to a corpus feature index.

    Returns the dense vector (features missing from ``named`` get 0) and
    the list of names in ``named`` that the index does not know.
    """
    w = np.zeros(len(feature_index))
    unknown: list[str] = []
    for name, value in named.items():
        idx = feature_index.get(name)
        if idx is None:
            unknown.append(name)
        else:
            w[idx] = value
    return w, unknown
