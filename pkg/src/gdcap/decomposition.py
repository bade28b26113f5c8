"""Stuff-region box decomposition.

An amorphous segment (sky, wall, road) is represented by 1-6 non-overlapping
boxes instead of one frame-spanning box.  Pixel coordinates are clustered with
seeded k-means for K = k_min..k_max; each cluster is boxed at the 5th/95th
coordinate percentiles; overlapping boxes are separated by moving facing edges
proportionally to box size; and each configuration is scored by

    coverage = |mask inside boxes| / |mask|
    overflow = |boxes outside mask| / |boxes|
    score    = coverage - overflow

The first K with a valid configuration (coverage >= min_coverage and
overflow <= max_overflow) wins; otherwise the best-scoring configuration seen
anywhere is returned flagged invalid.  Everything is deterministic given
(mask, params, base_seed).
"""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import EmptyMaskError, OverlapResolutionError
from .geometry import Box, Mask, box_intersection

logger = logging.getLogger(__name__)

_KMEANS_MAX_ITERATIONS = 50
_OVERLAP_MAX_ITERATIONS = 100


@dataclass(frozen=True)
class DecompositionParams:
    k_min: int = 1
    k_max: int = 6
    restarts_per_k: int = 10
    min_coverage: float = 0.90
    max_overflow: float = 0.30
    percentile_lo: float = 0.05
    percentile_hi: float = 0.95
    base_seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.percentile_lo < self.percentile_hi <= 1.0:
            raise ValueError("need 0 <= percentile_lo < percentile_hi <= 1")
        if self.k_min < 1 or self.k_max < self.k_min:
            raise ValueError("need 1 <= k_min <= k_max")
        if not (0.0 <= self.min_coverage <= 1.0 and 0.0 <= self.max_overflow <= 1.0):
            raise ValueError("thresholds must lie in [0, 1]")


@dataclass(frozen=True)
class ConfigScore:
    coverage: float
    overflow: float
    score: float
    valid: bool


@dataclass(frozen=True)
class AttemptRecord:
    """One decomposition attempt: a (k, restart) pair and how it fared."""

    k: int
    attempt: int
    score: Optional[ConfigScore]
    error: Optional[str] = None


@dataclass(frozen=True)
class DecompositionResult:
    boxes: Tuple[Box, ...]
    k_used: int
    score: ConfigScore
    attempts_made: int
    attempts: Tuple[AttemptRecord, ...] = field(default=())


def derive_seed(base_seed: int, k: int, attempt: int) -> int:
    """Stable per-attempt RNG seed: base_seed XOR hash(k, attempt)."""
    digest = hashlib.blake2b(f"{k}:{attempt}".encode("ascii"), digest_size=8).digest()
    return (base_seed ^ int.from_bytes(digest, "big")) & ((1 << 64) - 1)


def kmeans(points: Sequence[Tuple[int, int]], k: int, seed: int) -> List[np.ndarray]:
    """Seeded Lloyd k-means over 2-D points with k-means++ initialization.

    Returns k non-empty clusters partitioning the points (k is reduced to
    len(points) when there are fewer points than clusters).  Empty clusters
    are repaired by stealing the point farthest from its current centroid.
    Fully deterministic for a fixed seed.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be a sequence of (x, y) pairs")
    n = pts.shape[0]
    if n == 0:
        raise EmptyMaskError("k-means needs at least one point")
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > n:
        logger.debug("reducing k from %d to %d (not enough points)", k, n)
        k = n

    rng = np.random.Generator(np.random.PCG64(seed))
    centers = _kmeans_plus_plus(pts, k, rng)

    assignment = np.full(n, -1, dtype=np.int64)
    for _ in range(_KMEANS_MAX_ITERATIONS):
        dists = np.sum((pts[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        new_assignment = np.argmin(dists, axis=1)
        new_assignment = _repair_empty_clusters(new_assignment, dists, k)
        if np.array_equal(new_assignment, assignment):
            break
        assignment = new_assignment
        for c in range(k):
            members = pts[assignment == c]
            centers[c] = members.mean(axis=0)

    return [pts[assignment == c] for c in range(k)]


def _kmeans_plus_plus(pts: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = pts.shape[0]
    centers = np.empty((k, 2), dtype=np.float64)
    first = rng.integers(n)
    centers[0] = pts[first]
    closest = np.sum((pts - centers[0]) ** 2, axis=1)
    for c in range(1, k):
        total = closest.sum()
        if total > 0:
            probs = closest / total
            idx = rng.choice(n, p=probs)
        else:
            idx = rng.integers(n)
        centers[c] = pts[idx]
        closest = np.minimum(closest, np.sum((pts - centers[c]) ** 2, axis=1))
    return centers


def _repair_empty_clusters(assignment: np.ndarray, dists: np.ndarray, k: int) -> np.ndarray:
    assignment = assignment.copy()
    for c in range(k):
        if np.any(assignment == c):
            continue
        own = dists[np.arange(len(assignment)), assignment]
        # only steal from clusters that can spare a point
        counts = np.bincount(assignment, minlength=k)
        own = np.where(counts[assignment] > 1, own, -1.0)
        donor = int(np.argmax(own))
        assignment[donor] = c
    return assignment


def _percentile_index(n: int, p: float) -> int:
    # sorted-index rule ceil(p * (n - 1)); reproduces 0..99 -> [5, 95] at 5/95
    return min(n - 1, math.ceil(p * (n - 1)))


def percentile_box(cluster: Sequence[Tuple[int, int]], lo: float = 0.05, hi: float = 0.95) -> Box:
    """Box spanning the [lo, hi] coordinate percentiles of a cluster.

    Drops the most extreme points on each end so scattered outliers do not
    inflate the box.
    """
    pts = np.asarray(cluster)
    if pts.size == 0:
        raise EmptyMaskError("percentile box needs a non-empty cluster")
    xs = np.sort(pts[:, 0].astype(np.int64))
    ys = np.sort(pts[:, 1].astype(np.int64))
    n = len(xs)
    i_lo = _percentile_index(n, lo)
    i_hi = _percentile_index(n, hi)
    x0, x1 = int(xs[i_lo]), int(xs[i_hi])
    y0, y1 = int(ys[i_lo]), int(ys[i_hi])
    return Box(x0, y0, x1 - x0 + 1, y1 - y0 + 1)


def _axis_span(box: Box, axis: int) -> Tuple[int, int]:
    return (box.x, box.right) if axis == 0 else (box.y, box.bottom)


def _with_span(box: Box, axis: int, start: int, end: int) -> Box:
    if axis == 0:
        return Box(start, box.y, end - start, box.h)
    return Box(box.x, start, box.w, end - start)


def _separate_pair(a: Box, b: Box) -> Tuple[Box, Box, bool]:
    """Separate one overlapping pair along the proportionally cheaper axis."""
    inter = box_intersection(a, b)
    assert inter is not None
    ratio_h = inter.w / (a.w + b.w)
    ratio_v = inter.h / (a.h + b.h)
    axis = 0 if ratio_h <= ratio_v else 1

    (a1, a2), (b1, b2) = _axis_span(a, axis), _axis_span(b, axis)
    a_inside = b1 <= a1 and a2 <= b2
    b_inside = a1 <= b1 and b2 <= a2
    if a_inside or b_inside:
        # containment: send the inner box toward the nearer outer edge
        (i1, i2), (o1, o2) = ((a1, a2), (b1, b2)) if a_inside else ((b1, b2), (a1, a2))
        inner_first = (i1 - o1) <= (o2 - i2)
        if a_inside:
            first, second = (a, b) if inner_first else (b, a)
        else:
            first, second = (b, a) if inner_first else (a, b)
    else:
        first, second = (a, b) if a1 < b1 else (b, a)

    f1, f2 = _axis_span(first, axis)
    s1, s2 = _axis_span(second, axis)
    extent = f2 - s1  # facing-edge distance; equals the overlap for partial overlap
    size_f = f2 - f1
    size_s = s2 - s1
    share_f = extent * size_f / (size_f + size_s)
    if size_f >= size_s:
        move_f = math.ceil(share_f)
        move_s = extent - move_f
    else:
        move_s = math.ceil(extent - share_f)
        move_f = extent - move_s

    clamped = False
    if move_f > size_f - 1:
        move_f = size_f - 1
        clamped = True
    if move_s > size_s - 1:
        move_s = size_s - 1
        clamped = True
    if clamped:
        logger.warning("overlap move clamped at 1 px floor for pair %s / %s", first, second)

    new_first = _with_span(first, axis, f1, f2 - move_f)
    new_second = _with_span(second, axis, s1 + move_s, s2)
    if first is a:
        return new_first, new_second, clamped
    return new_second, new_first, clamped


def _worst_pair(boxes: Sequence[Box]) -> Optional[Tuple[int, int]]:
    best = None
    best_area = 0
    for i in range(len(boxes)):
        for j in range(i + 1, len(boxes)):
            inter = box_intersection(boxes[i], boxes[j])
            if inter is not None and inter.area > best_area:
                best_area = inter.area
                best = (i, j)
    return best


def eliminate_overlaps(boxes: Sequence[Box]) -> List[Box]:
    """Resolve all pairwise overlaps by shrinking facing edges.

    Resolution order is largest-overlap-first.  Every output box is contained
    in its input box.  Raises :class:`OverlapResolutionError` when the set is
    still overlapping after 100 passes (degenerate geometry).
    """
    current = list(boxes)
    for _ in range(_OVERLAP_MAX_ITERATIONS):
        pair = _worst_pair(current)
        if pair is None:
            return current
        i, j = pair
        current[i], current[j], _ = _separate_pair(current[i], current[j])
    raise OverlapResolutionError(f"overlaps unresolved after {_OVERLAP_MAX_ITERATIONS} passes")


def score_config(boxes: Sequence[Box], mask: Mask, params: DecompositionParams) -> ConfigScore:
    """Coverage/overflow of a (pairwise disjoint) box set against a mask."""
    if not mask.pixels:
        raise EmptyMaskError("cannot score boxes against an empty mask")
    if not boxes:
        return ConfigScore(coverage=0.0, overflow=0.0, score=0.0, valid=False)
    union_area = sum(b.area for b in boxes)
    coords = np.asarray(sorted(mask.pixels), dtype=np.int64)
    xs, ys = coords[:, 0], coords[:, 1]
    inside = np.zeros(len(coords), dtype=bool)
    for b in boxes:
        inside |= (xs >= b.x) & (xs < b.right) & (ys >= b.y) & (ys < b.bottom)
    covered = int(inside.sum())
    coverage = covered / len(mask.pixels)
    overflow = (union_area - covered) / union_area
    valid = coverage >= params.min_coverage and overflow <= params.max_overflow
    return ConfigScore(coverage=coverage, overflow=overflow, score=coverage - overflow, valid=valid)


def decompose_stuff(mask: Mask, params: DecompositionParams = DecompositionParams()) -> DecompositionResult:
    """Decompose a stuff mask into 1-6 disjoint boxes.

    Tries k = k_min..k_max with ``restarts_per_k`` independently seeded
    attempts each; returns the best valid configuration at the first k that
    produces one, else the best-scoring configuration overall with
    ``score.valid`` False.  Attempts that fail overlap resolution are logged,
    not fatal, unless every attempt fails.
    """
    if not mask.pixels:
        raise EmptyMaskError("cannot decompose an empty mask")
    points = sorted(mask.pixels)
    log: List[AttemptRecord] = []
    best_any: Optional[Tuple[ConfigScore, Tuple[Box, ...], int]] = None

    for k in range(params.k_min, params.k_max + 1):
        best_at_k: Optional[Tuple[ConfigScore, Tuple[Box, ...]]] = None
        for attempt in range(params.restarts_per_k):
            seed = derive_seed(params.base_seed, k, attempt)
            clusters = kmeans(points, k, seed)
            raw_boxes = [percentile_box(c, params.percentile_lo, params.percentile_hi) for c in clusters]
            try:
                boxes = tuple(eliminate_overlaps(raw_boxes))
            except OverlapResolutionError as err:
                log.append(AttemptRecord(k=k, attempt=attempt, score=None, error=str(err)))
                continue
            cs = score_config(boxes, mask, params)
            log.append(AttemptRecord(k=k, attempt=attempt, score=cs))
            if cs.valid and (best_at_k is None or cs.score > best_at_k[0].score):
                best_at_k = (cs, boxes)
            if best_any is None or cs.score > best_any[0].score:
                best_any = (cs, boxes, k)
        if best_at_k is not None:
            cs, boxes = best_at_k
            return DecompositionResult(
                boxes=boxes, k_used=k, score=cs, attempts_made=len(log), attempts=tuple(log)
            )

    if best_any is None:
        raise OverlapResolutionError("every decomposition attempt failed overlap resolution")
    cs, boxes, k = best_any
    return DecompositionResult(boxes=boxes, k_used=k, score=cs, attempts_made=len(log), attempts=tuple(log))
