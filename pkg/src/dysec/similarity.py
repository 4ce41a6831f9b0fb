"""Name and metadata similarity for counterpart-finding and typosquat checks.

Four methods: exact string match, normalized Levenshtein, Jaccard over word
tokens, and cosine over term frequencies.  Candidate ranking takes the best
normalized score over whichever methods pass their thresholds.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from dysec import kernels
from dysec.trace_model import PackageRef

_TOKEN_SPLIT = re.compile(r"[^a-z0-9]+")

# Screening defaults; exposed because no single fusion rule is canonical.
DEFAULT_THRESHOLDS: dict[str, float] = {
    "string_match": 1.0,
    "levenshtein": 0.85,
    "jaccard": 0.6,
    "cosine": 0.6,
}


class SimilarityMethod(str, Enum):
    STRING_MATCH = "string_match"
    LEVENSHTEIN = "levenshtein"
    JACCARD = "jaccard"
    COSINE = "cosine"


@dataclass(frozen=True)
class SimilarityScore:
    method: SimilarityMethod
    value: float

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"similarity out of [0,1]: {self.value}")
        if self.method is SimilarityMethod.STRING_MATCH and self.value not in (0.0, 1.0):
            raise ValueError("string_match is binary")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumerics; empty tokens dropped."""
    return [t for t in _TOKEN_SPLIT.split(text.lower()) if t]


def levenshtein_distance(a: str, b: str) -> int:
    return kernels.levenshtein(a, b)


def levenshtein_similarity(a: str, b: str) -> float:
    """1 - d/max(|a|, |b|); two empty strings are identical."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein_distance(a, b) / longest


def string_match(a: str, b: str) -> float:
    return 1.0 if a == b else 0.0


def jaccard_similarity(a: Iterable[str], b: Iterable[str]) -> float:
    sa, sb = set(a), set(b)
    if not sa and not sb:
        return 1.0
    union = sa | sb
    return len(sa & sb) / len(union)


def cosine_similarity(a: Mapping, b: Mapping) -> float:
    """Cosine over term-frequency mappings; 0 when either vector is null."""
    norm_a = math.sqrt(sum(v * v for v in a.values()))
    norm_b = math.sqrt(sum(v * v for v in b.values()))
    if norm_a == 0.0 or norm_b == 0.0:
        return 0.0
    shorter, longer = (a, b) if len(a) <= len(b) else (b, a)
    dot = sum(v * longer.get(k, 0) for k, v in shorter.items())
    return dot / (norm_a * norm_b)


def term_frequencies(text: str) -> dict[str, int]:
    freqs: dict[str, int] = {}
    for token in tokenize(text):
        freqs[token] = freqs.get(token, 0) + 1
    return freqs


@dataclass(frozen=True)
class Candidate:
    name: str
    best: SimilarityScore
    scores: dict[str, float]

    @property
    def best_method(self) -> SimilarityMethod:
        return self.best.method

    @property
    def best_score(self) -> float:
        return self.best.value


def _all_scores(query: str, other: str) -> dict[str, float]:
    return {
        SimilarityMethod.STRING_MATCH.value: string_match(query, other),
        SimilarityMethod.LEVENSHTEIN.value: levenshtein_similarity(query, other),
        SimilarityMethod.JACCARD.value: jaccard_similarity(tokenize(query), tokenize(other)),
        SimilarityMethod.COSINE.value: cosine_similarity(
            term_frequencies(query), term_frequencies(other)
        ),
    }


def find_counterparts(
    query: PackageRef | str,
    index: Sequence[PackageRef | str],
    thresholds: Mapping[str, float] | None = None,
) -> list[Candidate]:
    """Rank index entries passing any method threshold.

    Ordered by the maximum score across passing methods, ties broken
    lexicographically by name.
    """
    if not index:
        raise ValueError("index must be non-empty")
    thresholds = dict(DEFAULT_THRESHOLDS, **(thresholds or {}))
    query_name = query.name if isinstance(query, PackageRef) else query
    out: list[Candidate] = []
    for entry in index:
        name = entry.name if isinstance(entry, PackageRef) else entry
        scores = _all_scores(query_name, name)
        passing = {
            m: s for m, s in scores.items() if m in thresholds and s >= thresholds[m]
        }
        if not passing:
            continue
        best_method = max(passing, key=lambda m: (passing[m], m))
        out.append(
            Candidate(
                name=name,
                best=SimilarityScore(SimilarityMethod(best_method), passing[best_method]),
                scores=scores,
            )
        )
    out.sort(key=lambda c: (-c.best.value, c.name))
    return out


def write_candidates_csv(
    path: str | Path, query: str, candidates: Sequence[Candidate]
) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["query", "candidate", "method", "score"])
        for c in candidates:
            writer.writerow([query, c.name, c.best_method.value, f"{c.best_score:.6f}"])
