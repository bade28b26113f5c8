"""Detection filtering, reading-order sorting, and per-class id assignment.

Objects are ordered the way text is read: the frame is split into three
horizontal bands by normalized box-center y, objects sort top band first,
then left to right within a band.  Ids are `<class>-<n>` with n counting per
class along that order, so person-0 always precedes person-1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

from .geometry import Box
from .model import Detection, SceneObject


@dataclass(frozen=True)
class OrderingParams:
    min_score: float = 0.7
    max_detections: int = 40
    band_edges: Tuple[float, float] = (0.3333, 0.6667)

    def __post_init__(self) -> None:
        lo, hi = self.band_edges
        if not 0.0 < lo < hi < 1.0:
            raise ValueError("band edges must be strictly increasing inside (0, 1)")


@dataclass(frozen=True)
class ObjectCandidate:
    """A single (class, box) unit awaiting ordering and id assignment."""

    class_name: str
    box: Box
    source_detection: int = 0
    score: float = 1.0


def filter_detections(
    detections: Sequence[Detection], params: OrderingParams = OrderingParams()
) -> List[Detection]:
    """Drop low-confidence detections, then cap at the most likely ones.

    Keeps score >= min_score, sorted by descending score with input order
    breaking ties, truncated to max_detections.
    """
    return [det for _, det in _filter_indexed(detections, params)]


def _filter_indexed(
    detections: Sequence[Detection], params: OrderingParams
) -> List[Tuple[int, Detection]]:
    kept = [(i, d) for i, d in enumerate(detections) if d.score >= params.min_score]
    kept.sort(key=lambda pair: (-pair[1].score, pair[0]))
    return kept[: params.max_detections]


def band_index(center_y_norm: float, params: OrderingParams = OrderingParams()) -> int:
    """Band of a normalized y coordinate; edge values join the lower band."""
    lo, hi = params.band_edges
    if center_y_norm <= lo:
        return 0
    if center_y_norm <= hi:
        return 1
    return 2


def order_objects(
    candidates: Sequence[ObjectCandidate],
    frame_width: int,
    frame_height: int,
    params: OrderingParams = OrderingParams(),
) -> List[ObjectCandidate]:
    """Total reading order: (band of center-y, left edge, center-x, input index)."""

    def key(pair):
        idx, cand = pair
        cx, cy = cand.box.center
        return (band_index(cy / frame_height, params), cand.box.x, cx, idx)

    return [cand for _, cand in sorted(enumerate(candidates), key=key)]


def assign_ids(ordered: Sequence[ObjectCandidate]) -> List[SceneObject]:
    """Per-class counters along the given order; ids are `<class>-<n>`."""
    counters: dict = {}
    objects = []
    for cand in ordered:
        n = counters.get(cand.class_name, 0)
        counters[cand.class_name] = n + 1
        objects.append(
            SceneObject(
                object_id=f"{cand.class_name}-{n}",
                class_name=cand.class_name,
                box=cand.box,
                source_detection=cand.source_detection,
                score=cand.score,
            )
        )
    return objects


def build_scene(
    detections: Sequence[Detection],
    frame_width: int,
    frame_height: int,
    params: OrderingParams = OrderingParams(),
) -> List[SceneObject]:
    """Filter detections, expand stuff boxes into units, order, assign ids.

    The confidence/top-N filter applies at detection level; each box of a
    stuff detection then becomes its own orderable unit (a three-box wall
    yields wall-0..wall-2 interleaved with other classes by position).
    """
    candidates = []
    for index, det in _filter_indexed(detections, params):
        for box in det.boxes:
            candidates.append(
                ObjectCandidate(
                    class_name=det.class_name, box=box, source_detection=index, score=det.score
                )
            )
    ordered = order_objects(candidates, frame_width, frame_height, params)
    return assign_ids(ordered)
