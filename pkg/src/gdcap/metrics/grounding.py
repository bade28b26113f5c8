"""Grounding accuracy scores over referenced-vs-detected object id sets."""

from __future__ import annotations

from typing import AbstractSet

from ..model import GroundingScore


def grounding_scores(referenced: AbstractSet[str], detected: AbstractSet[str]) -> GroundingScore:
    """Precision/recall/F1 of caption references against detected objects.

    TP are ids both referenced and detected, FP referenced-only, FN
    detected-only.  Both sets empty counts as perfect (frames with nothing to
    ground stay well-defined); an empty numerator with a non-empty complement
    scores zero.
    """
    referenced = set(referenced)
    detected = set(detected)
    tp = len(referenced & detected)
    fp = len(referenced - detected)
    fn = len(detected - referenced)
    if tp + fp > 0:
        precision = tp / (tp + fp)
    else:
        precision = 1.0 if fn == 0 else 0.0
    if tp + fn > 0:
        recall = tp / (tp + fn)
    else:
        recall = 1.0 if fp == 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return GroundingScore(tp=tp, fp=fp, fn=fn, precision=precision, recall=recall, f1=f1)


def gmeteor(meteor_score: float, f1: float) -> float:
    """Harmonic mean of sentence METEOR and grounding F1; 0 when both are 0."""
    if meteor_score + f1 == 0:
        return 0.0
    return 2 * meteor_score * f1 / (meteor_score + f1)
