"""Sentence-level language metrics: METEOR, BLEU-4, ROUGE-L.

All three operate on token lists.  Captions should be stripped of grounding
markup (keeping span text) and tokenized with :func:`tokenize` first, so the
metrics compare prose, not markup.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from typing import List, Sequence, Tuple

from . import porter

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")

ROUGE_L_BETA = 1.2
BLEU_EPSILON = 1e-9


def tokenize(text: str) -> List[str]:
    """Lowercase tokens: words plus punctuation split into separate tokens."""
    return _TOKEN_RE.findall(text.lower())


def _align(candidate: Sequence[str], reference: Sequence[str]) -> List[Tuple[int, int]]:
    """One-to-one unigram alignment: exact matches first, then stem matches.

    Both stages walk the candidate left to right and take the first unmatched
    reference token, which makes the alignment deterministic.
    """
    matched_ref = [False] * len(reference)
    cand_to_ref = [-1] * len(candidate)
    for i, tok in enumerate(candidate):
        for j, rtok in enumerate(reference):
            if not matched_ref[j] and tok == rtok:
                cand_to_ref[i] = j
                matched_ref[j] = True
                break
    stems_ref = [porter.stem(tok) for tok in reference]
    for i, tok in enumerate(candidate):
        if cand_to_ref[i] != -1:
            continue
        s = porter.stem(tok)
        for j in range(len(reference)):
            if not matched_ref[j] and stems_ref[j] == s:
                cand_to_ref[i] = j
                matched_ref[j] = True
                break
    return [(i, j) for i, j in enumerate(cand_to_ref) if j != -1]


def _count_chunks(pairs: List[Tuple[int, int]]) -> int:
    """Maximal runs of alignment pairs contiguous in both sentences."""
    chunks = 0
    prev = None
    for i, j in pairs:
        if prev is None or i != prev[0] + 1 or j != prev[1] + 1:
            chunks += 1
        prev = (i, j)
    return chunks


def meteor(candidate: Sequence[str], reference: Sequence[str]) -> float:
    """Two-stage (exact, stem) METEOR with the fragmentation penalty.

    Fmean = 10PR / (R + 9P), penalty = 0.5 * (chunks / matches)^3,
    score = Fmean * (1 - penalty); 0 when nothing matches.
    """
    if not candidate or not reference:
        return 0.0
    pairs = _align(candidate, reference)
    m = len(pairs)
    if m == 0:
        return 0.0
    precision = m / len(candidate)
    recall = m / len(reference)
    fmean = 10 * precision * recall / (recall + 9 * precision)
    chunks = _count_chunks(pairs)
    penalty = 0.5 * (chunks / m) ** 3
    return fmean * (1.0 - penalty)


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu4(candidate: Sequence[str], reference: Sequence[str]) -> float:
    """BLEU with modified 1..4-gram precisions and brevity penalty.

    Zero n-gram matches are smoothed to BLEU_EPSILON; orders for which the
    candidate has no n-grams at all are skipped rather than zeroed.
    """
    if not candidate or not reference:
        return 0.0
    log_precisions = []
    for n in range(1, 5):
        cand_counts = _ngram_counts(candidate, n)
        total = sum(cand_counts.values())
        if total == 0:
            continue
        ref_counts = _ngram_counts(reference, n)
        clipped = sum(min(count, ref_counts[gram]) for gram, count in cand_counts.items())
        numerator = clipped if clipped > 0 else BLEU_EPSILON
        log_precisions.append(math.log(numerator / total))
    if not log_precisions:
        return 0.0
    geo_mean = math.exp(sum(log_precisions) / len(log_precisions))
    c, r = len(candidate), len(reference)
    brevity = 1.0 if c >= r else math.exp(1 - r / c)
    return brevity * geo_mean


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    prev = [0] * (len(b) + 1)
    for i in range(1, len(a) + 1):
        cur = [0] * (len(b) + 1)
        for j in range(1, len(b) + 1):
            if a[i - 1] == b[j - 1]:
                cur[j] = prev[j - 1] + 1
            else:
                cur[j] = max(prev[j], cur[j - 1])
        prev = cur
    return prev[len(b)]


def rouge_l(candidate: Sequence[str], reference: Sequence[str], beta: float = ROUGE_L_BETA) -> float:
    """LCS F-measure: F = (1 + b^2) R P / (R + b^2 P)."""
    if not candidate or not reference:
        return 0.0
    lcs = _lcs_length(candidate, reference)
    if lcs == 0:
        return 0.0
    recall = lcs / len(reference)
    precision = lcs / len(candidate)
    return (1 + beta**2) * recall * precision / (recall + beta**2 * precision)
