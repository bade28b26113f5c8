"""Domain types shared across the pipeline: detections, scene objects, frames."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Tuple

from .geometry import Box, Mask

OBJECT_ID_RE = re.compile(r"^([a-z-]+)-([0-9]+)$")


class DetectionKind(enum.Enum):
    THING = "thing"
    STUFF = "stuff"


@dataclass(frozen=True)
class Detection:
    """One segmented region with its class, confidence, mask and box(es).

    Thing detections carry exactly one tight box; stuff detections carry the
    1-6 boxes produced by decomposition.
    """

    class_name: str
    kind: DetectionKind
    score: float
    mask: Mask
    boxes: Tuple[Box, ...]

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must be in [0, 1], got {self.score}")
        if self.kind is DetectionKind.THING and len(self.boxes) != 1:
            raise ValueError("thing detections carry exactly one box")
        for box in self.boxes:
            if not box.fits_in_frame(self.mask.width, self.mask.height):
                raise ValueError(f"box {box} exceeds frame {self.mask.width}x{self.mask.height}")


@dataclass(frozen=True)
class SceneObject:
    """An identity-bearing grounded unit such as person-1, with one box."""

    object_id: str
    class_name: str
    box: Box
    source_detection: int
    score: float

    def __post_init__(self) -> None:
        if not OBJECT_ID_RE.match(self.object_id):
            raise ValueError(f"malformed object id {self.object_id!r}")


def object_id_class(object_id: str) -> str:
    """Class part of a `<class>-<n>` id (e.g. 'dining-table' from 'dining-table-3')."""
    m = OBJECT_ID_RE.match(object_id)
    if not m:
        raise ValueError(f"malformed object id {object_id!r}")
    return m.group(1)


@dataclass(frozen=True)
class Frame:
    """A single image with its ordered, id-assigned scene objects."""

    frame_id: str
    width: int
    height: int
    image_ref: str
    objects: Tuple[SceneObject, ...]
    split: str = "train"

    def __post_init__(self) -> None:
        if self.split not in ("train", "eval"):
            raise ValueError(f"split must be train or eval, got {self.split!r}")
        ids = [o.object_id for o in self.objects]
        if len(ids) != len(set(ids)):
            raise ValueError("duplicate object ids in frame")
        # ids count per class along the object order (person-0 precedes person-1)
        counters: dict = {}
        for obj in self.objects:
            n = counters.get(obj.class_name, 0)
            expected = f"{obj.class_name}-{n}"
            if obj.object_id != expected:
                raise ValueError(
                    f"object id {obj.object_id!r} out of order, expected {expected!r}"
                )
            counters[obj.class_name] = n + 1

    @property
    def object_ids(self) -> frozenset:
        return frozenset(o.object_id for o in self.objects)


@dataclass(frozen=True)
class GroundingScore:
    """Grounding precision/recall/F1 over referenced-vs-detected id sets."""

    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class LanguageScores:
    meteor: float
    bleu4: float
    rouge_l: float


@dataclass(frozen=True)
class MetricReport:
    """All scores for one caption against one frame (and one reference text)."""

    grounding: GroundingScore
    language: LanguageScores
    gmeteor: float


@dataclass(frozen=True)
class RatingRecord:
    """One rater's 5-criterion Likert evaluation of one caption."""

    caption_id: str
    rater_id: str
    criteria: Tuple[int, int, int, int, int]

    def __post_init__(self) -> None:
        if len(self.criteria) != 5:
            raise ValueError("exactly five criteria required")
        for value in self.criteria:
            if not 1 <= value <= 5:
                raise ValueError(f"criterion value {value} outside 1..5")


RATING_CRITERIA = (
    "object_precision",
    "grounding_recall",
    "description_accuracy",
    "language_quality",
    "overall_quality",
)
