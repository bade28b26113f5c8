"""Toolkit for visually grounded image captions.

Builds identity-stable object sets from panoptic segmentation masks, parses
and validates the gdo/gda/gdl grounding tag markup, scores captions
(grounding F1, METEOR/BLEU-4/ROUGE-L, gMETEOR), drives F1-gated iterative
caption refinement against an external generator, and hosts the human
refinement/rating workflow.
"""

from .geometry import Box, Mask, box_intersection, mask_tight_box
from .markup import (
    CaptionAst,
    CaptionSyntaxError,
    Diagnostics,
    PlainText,
    TagKind,
    TagSpan,
    parse_caption,
    referenced_ids,
    serialize_caption,
    strip_tags,
    validate_against_frame,
    validate_text,
)
from .model import Detection, DetectionKind, Frame, GroundingScore, MetricReport, SceneObject

__version__ = "0.1.0"

__all__ = [
    "Box",
    "CaptionAst",
    "CaptionSyntaxError",
    "Detection",
    "DetectionKind",
    "Diagnostics",
    "Frame",
    "GroundingScore",
    "Mask",
    "MetricReport",
    "PlainText",
    "SceneObject",
    "TagKind",
    "TagSpan",
    "box_intersection",
    "mask_tight_box",
    "parse_caption",
    "referenced_ids",
    "serialize_caption",
    "strip_tags",
    "validate_against_frame",
    "validate_text",
]
