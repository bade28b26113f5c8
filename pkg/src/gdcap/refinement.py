"""Caption generation pipeline and the F1-gated iterative refinement loop.

The caption generator is an external model behind a small client interface;
an HTTP client and a deterministic scripted client (for tests and offline
runs) are provided.  The refinement loop re-requests a caption with
structured feedback, raising the sampling temperature from 0.5 by 0.1 every
two attempts, and keeps the best-scoring caption across at most ten attempts
or until grounding F1 reaches the threshold.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Protocol, Sequence, Tuple, Union

import requests

from .errors import CaptionerError, RefinementError
from .geometry import Box
from .markup import (
    CaptionAst,
    CaptionSyntaxError,
    Diagnostics,
    parse_caption,
    referenced_ids,
    validate_against_frame,
)
from .metrics.grounding import grounding_scores
from .model import Frame, GroundingScore

logger = logging.getLogger(__name__)

DEFAULT_F1_THRESHOLD = 0.9
DEFAULT_MAX_ATTEMPTS = 10

STAGE_GENERAL = "general"
STAGE_OBJECT_CROP = "object_crop"
STAGE_SYNTHESIS = "synthesis"
STAGE_REFINE = "refine"


def temperature_at(attempt: int) -> float:
    """Sampling temperature for a 1-based attempt: 0.5, +0.1 every two, cap 1.0."""
    if attempt < 1:
        raise ValueError(f"attempt must be >= 1, got {attempt}")
    return min(1.0, 0.5 + 0.1 * ((attempt - 1) // 2))


@dataclass(frozen=True)
class ObjectMeta:
    """Object metadata sent to the captioner: id, class, normalized box."""

    object_id: str
    class_name: str
    x: float
    y: float
    w: float
    h: float


def object_metadata(frame: Frame) -> Tuple[ObjectMeta, ...]:
    return tuple(
        ObjectMeta(o.object_id, o.class_name, *o.box.normalized(frame.width, frame.height))
        for o in frame.objects
    )


@dataclass(frozen=True)
class Feedback:
    """Structured error analysis fed back to the captioner."""

    missing_ids: frozenset = frozenset()
    spurious_ids: frozenset = frozenset()
    syntax_errors: Tuple[Tuple[int, str], ...] = ()


@dataclass(frozen=True)
class CaptionerRequest:
    frame_ref: str
    objects: Tuple[ObjectMeta, ...]
    stage: str
    temperature: float
    prior_caption: Optional[str] = None
    feedback: Optional[Feedback] = None
    crop: Optional[Box] = None
    object_captions: Tuple[Tuple[str, str], ...] = ()

    def __post_init__(self) -> None:
        if self.stage not in (STAGE_GENERAL, STAGE_OBJECT_CROP, STAGE_SYNTHESIS, STAGE_REFINE):
            raise ValueError(f"unknown stage {self.stage!r}")
        if not 0.0 <= self.temperature <= 1.0:
            raise ValueError("temperature must be in [0, 1]")
        if self.stage == STAGE_REFINE and (self.prior_caption is None or self.feedback is None):
            raise ValueError("refine stage requires prior_caption and feedback")
        if self.stage == STAGE_OBJECT_CROP and self.crop is None:
            raise ValueError("object_crop stage requires a crop box")

    def to_payload(self) -> dict:
        payload = {
            "frame_ref": self.frame_ref,
            "stage": self.stage,
            "temperature": self.temperature,
            "objects": [
                {"id": o.object_id, "class": o.class_name, "x": o.x, "y": o.y, "w": o.w, "h": o.h}
                for o in self.objects
            ],
        }
        if self.prior_caption is not None:
            payload["prior_caption"] = self.prior_caption
        if self.feedback is not None:
            payload["feedback"] = {
                "missing_ids": sorted(self.feedback.missing_ids),
                "spurious_ids": sorted(self.feedback.spurious_ids),
                "syntax_errors": [list(e) for e in self.feedback.syntax_errors],
            }
        if self.crop is not None:
            payload["crop"] = {"x": self.crop.x, "y": self.crop.y, "w": self.crop.w, "h": self.crop.h}
        if self.object_captions:
            payload["object_captions"] = {oid: text for oid, text in self.object_captions}
        return payload


class Captioner(Protocol):
    def generate(self, request: CaptionerRequest) -> str: ...


class HttpCaptioner:
    """POSTs requests as JSON to a configurable endpoint.

    The endpoint must answer ``{"caption": "..."}``.  Transport and protocol
    failures raise :class:`CaptionerError`.
    """

    def __init__(self, endpoint: str, timeout: float = 60.0, token: Optional[str] = None):
        self.endpoint = endpoint
        self.timeout = timeout
        self.token = token

    def generate(self, request: CaptionerRequest) -> str:
        headers = {"Content-Type": "application/json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        try:
            response = requests.post(
                self.endpoint, data=json.dumps(request.to_payload()), headers=headers,
                timeout=self.timeout,
            )
            response.raise_for_status()
            body = response.json()
        except (requests.RequestException, ValueError) as err:
            raise CaptionerError(f"captioner request failed: {err}") from err
        if "caption" not in body:
            raise CaptionerError("captioner response missing 'caption' field")
        return body["caption"]


ScriptStep = Union[str, Exception, Callable[[CaptionerRequest], str]]


class ScriptedCaptioner:
    """Deterministic captioner for tests: replays a script, records requests.

    Each script step is a caption string, an exception to raise (transport
    failure simulation), or a callable of the request.
    """

    def __init__(self, script: Sequence[ScriptStep]):
        self.script = list(script)
        self.requests: List[CaptionerRequest] = []

    def generate(self, request: CaptionerRequest) -> str:
        self.requests.append(request)
        if not self.script:
            raise CaptionerError("scripted captioner ran out of responses")
        step = self.script.pop(0)
        if isinstance(step, Exception):
            raise step
        if callable(step):
            return step(request)
        return step


@dataclass(frozen=True)
class AttemptRecord:
    attempt: int
    temperature: float
    f1: float
    error: Optional[str] = None


@dataclass
class RefinementResult:
    best_caption: Optional[CaptionAst]
    best_text: str
    best_f1: float
    attempts: List[AttemptRecord]
    converged: bool


def build_feedback(
    diag: Diagnostics, score: GroundingScore, frame: Frame, ast: Optional[CaptionAst]
) -> Feedback:
    """Missing = detected but unreferenced; spurious = referenced but undetected."""
    refs = referenced_ids(ast) if ast is not None else set()
    return Feedback(
        missing_ids=frozenset(frame.object_ids - refs),
        spurious_ids=frozenset(refs - frame.object_ids),
        syntax_errors=tuple(diag.syntax_errors),
    )


def _evaluate(text: str, frame: Frame) -> Tuple[Optional[CaptionAst], Diagnostics, GroundingScore]:
    """Parse/validate/score a response; unparseable text scores F1 = 0."""
    try:
        ast = parse_caption(text)
    except CaptionSyntaxError as err:
        diag = Diagnostics(syntax_errors=[(err.position, err.message)])
        zero = GroundingScore(
            tp=0, fp=0, fn=len(frame.objects), precision=0.0, recall=0.0, f1=0.0
        )
        return None, diag, zero
    diag = validate_against_frame(ast, frame)
    score = grounding_scores(referenced_ids(ast), frame.object_ids)
    return ast, diag, score


def refine(
    frame: Frame,
    captioner: Captioner,
    initial_caption: str,
    threshold: float = DEFAULT_F1_THRESHOLD,
    max_attempts: int = DEFAULT_MAX_ATTEMPTS,
) -> RefinementResult:
    """Iteratively re-request a caption until grounding F1 meets the threshold.

    Attempt a's request carries the previous response (the initial caption for
    a=1) and feedback derived from it.  The best caption by F1 is retained
    (ties keep the earliest attempt); transport failures are recorded as
    failed attempts, and only an all-failed run raises
    :class:`RefinementError`.
    """
    meta = object_metadata(frame)
    prior_text = initial_caption
    prior_ast, prior_diag, prior_score = _evaluate(initial_caption, frame)

    attempts: List[AttemptRecord] = []
    best: Optional[Tuple[float, Optional[CaptionAst], str]] = None
    for attempt in range(1, max_attempts + 1):
        temperature = temperature_at(attempt)
        request = CaptionerRequest(
            frame_ref=frame.frame_id,
            objects=meta,
            stage=STAGE_REFINE,
            temperature=temperature,
            prior_caption=prior_text,
            feedback=build_feedback(prior_diag, prior_score, frame, prior_ast),
        )
        try:
            text = captioner.generate(request)
        except CaptionerError as err:
            logger.warning("refine attempt %d failed: %s", attempt, err)
            attempts.append(AttemptRecord(attempt, temperature, 0.0, error=str(err)))
            continue
        ast, diag, score = _evaluate(text, frame)
        attempts.append(AttemptRecord(attempt, temperature, score.f1))
        if best is None or score.f1 > best[0]:
            best = (score.f1, ast, text)
        prior_text, prior_ast, prior_diag, prior_score = text, ast, diag, score
        if score.f1 >= threshold:
            break

    if best is None:
        raise RefinementError("every refinement attempt failed", attempts=attempts)
    best_f1, best_ast, best_text = best
    return RefinementResult(
        best_caption=best_ast,
        best_text=best_text,
        best_f1=best_f1,
        attempts=attempts,
        converged=best_f1 >= threshold,
    )


def generate_pipeline(frame: Frame, captioner: Captioner, temperature: float = 0.5) -> str:
    """Three-stage generation: general caption, per-object captions, synthesis.

    Returns the synthesized grounded caption text (which typically then goes
    through :func:`refine`).  A transport failure aborts with the stage named.
    """
    meta = object_metadata(frame)

    def call(request: CaptionerRequest) -> str:
        try:
            return captioner.generate(request)
        except CaptionerError as err:
            raise CaptionerError(f"stage {request.stage!r} failed: {err}") from err

    general = call(
        CaptionerRequest(
            frame_ref=frame.frame_id, objects=meta, stage=STAGE_GENERAL, temperature=temperature
        )
    )
    object_captions = []
    for obj in frame.objects:
        crop_caption = call(
            CaptionerRequest(
                frame_ref=frame.frame_id,
                objects=meta,
                stage=STAGE_OBJECT_CROP,
                temperature=temperature,
                crop=obj.box,
            )
        )
        object_captions.append((obj.object_id, crop_caption))
    return call(
        CaptionerRequest(
            frame_ref=frame.frame_id,
            objects=meta,
            stage=STAGE_SYNTHESIS,
            temperature=temperature,
            prior_caption=general,
            object_captions=tuple(object_captions),
        )
    )


def generate_and_refine(
    frame: Frame,
    captioner: Captioner,
    threshold: float = DEFAULT_F1_THRESHOLD,
    max_attempts: int = DEFAULT_MAX_ATTEMPTS,
) -> RefinementResult:
    """Run the full pipeline, then refine unless the synthesis already passes."""
    synthesized = generate_pipeline(frame, captioner)
    ast, _, score = _evaluate(synthesized, frame)
    if score.f1 >= threshold:
        return RefinementResult(
            best_caption=ast, best_text=synthesized, best_f1=score.f1, attempts=[], converged=True
        )
    return refine(frame, captioner, synthesized, threshold=threshold, max_attempts=max_attempts)
