"""HTTP service hosting the human refinement and rating workflows.

All truth lives in the :class:`~gdcap.store.FrameStore`; handlers are
stateless apart from a lock serializing task assignment, so a crash-restart
reconstructs exactly the store's state.  Raters authenticate with bearer
tokens mapped to rater ids in the service config.

Endpoints::

    GET  /frames/{frame_id}
    GET  /frames/{frame_id}/image[?box=x,y,w,h]
    GET  /tasks/next?kind=refine|rate
    POST /tasks/{task_id}/refinement   {"text": ..., "base_revision": ...}
    POST /tasks/{task_id}/rating       {"criteria": [c1..c5]}
    GET  /reports/agreement[?source=...]
    GET  /reports/metrics?candidate=model&reference=auto[&split=eval]
"""

from __future__ import annotations

import hashlib
import io
import random
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Set

from fastapi import Depends, FastAPI, HTTPException, Query, Request
from fastapi.responses import JSONResponse, Response

from . import markup
from .errors import ConflictError, InsufficientDataError, NotFoundError
from .metrics.agreement import krippendorff_alpha
from .metrics.grounding import grounding_scores
from .metrics.report import score_corpus
from .model import RATING_CRITERIA, Frame, RatingRecord
from .store import CaptionRecord, FrameStore, utc_now

RATERS_PER_CAPTION = 3


def rater_shuffle_seed(study_seed: int, rater_id: str) -> int:
    """Process-independent seed for a rater's presentation order."""
    digest = hashlib.blake2b(f"{study_seed}:{rater_id}".encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


@dataclass
class ServiceConfig:
    store_root: Path
    tokens: Dict[str, str]  # bearer token -> rater id
    study_seed: int = 0
    raters_per_caption: int = RATERS_PER_CAPTION


@dataclass
class Task:
    task_id: str
    frame_id: str
    caption_id: str
    kind: str  # refine | rate
    assigned_to: str
    status: str = "open"  # open | done
    created_at: str = field(default_factory=utc_now)

    def to_json(self) -> dict:
        return {
            "task_id": self.task_id,
            "frame_id": self.frame_id,
            "caption_id": self.caption_id,
            "kind": self.kind,
            "assigned_to": self.assigned_to,
            "status": self.status,
            "created_at": self.created_at,
        }


class AnnotationService:
    """Store-backed workflow logic behind the HTTP surface."""

    def __init__(self, config: ServiceConfig):
        self.config = config
        self.store = FrameStore(config.store_root)
        self._assign_lock = threading.Lock()

    # -- helpers -------------------------------------------------------------

    def caption_authors(self, caption_id: str) -> Set[str]:
        """Raters who authored or refined any revision of a caption."""
        return {
            record.author
            for record in self.store.caption_revisions(caption_id)
            if record.author is not None
        }

    def _ratings_by_caption(self) -> Dict[str, List[dict]]:
        by_caption: Dict[str, List[dict]] = {}
        for event in self.store.list_ratings():
            by_caption.setdefault(event["caption_id"], []).append(event)
        return by_caption

    def _rater_queue(self, rater_id: str, caption_ids: Sequence[str]) -> List[str]:
        """Per-rater presentation order: seeded shuffle of the caption pool."""
        queue = sorted(caption_ids)
        random.Random(rater_shuffle_seed(self.config.study_seed, rater_id)).shuffle(queue)
        return queue

    # -- task assignment -------------------------------------------------------

    def next_task(self, rater_id: str, kind: str) -> Optional[Task]:
        if kind not in ("refine", "rate"):
            raise ValueError(f"unknown task kind {kind!r}")
        with self._assign_lock:
            tasks = self.store.list_tasks()
            for doc in tasks:
                if doc["assigned_to"] == rater_id and doc["kind"] == kind and doc["status"] == "open":
                    return Task(**doc)
            caption_id = self._pick_caption(rater_id, kind, tasks)
            if caption_id is None:
                return None
            record = self.store.load_caption(caption_id)
            task = Task(
                task_id=f"{kind}-{caption_id}-{rater_id}",
                frame_id=record.frame_id,
                caption_id=caption_id,
                kind=kind,
                assigned_to=rater_id,
            )
            self.store.save_task(task.to_json(), expected_status=None)
            return task

    def _pick_caption(self, rater_id: str, kind: str, tasks: List[dict]) -> Optional[str]:
        ratings = self._ratings_by_caption()
        for caption_id in self._rater_queue(rater_id, self.store.list_captions()):
            authors = self.caption_authors(caption_id)
            if rater_id in authors:
                continue  # never rate or re-refine your own work
            if any(e["rater_id"] == rater_id for e in ratings.get(caption_id, [])):
                continue  # already rated it: neither rate again nor refine it
            own_tasks = [
                t for t in tasks if t["caption_id"] == caption_id and t["assigned_to"] == rater_id
            ]
            if own_tasks:
                continue  # holding or finished a task on this caption (either kind)
            caption_tasks = [t for t in tasks if t["caption_id"] == caption_id and t["kind"] == kind]
            if kind == "refine":
                latest = self.store.load_caption(caption_id)
                if latest.source == "human":
                    continue  # single-pass refinement: already refined
                if caption_tasks:
                    continue  # someone else holds or finished it
                return caption_id
            # rate: three distinct raters per caption
            raters = {t["assigned_to"] for t in caption_tasks}
            raters.update(e["rater_id"] for e in ratings.get(caption_id, []))
            if len(raters) >= self.config.raters_per_caption:
                continue
            return caption_id
        return None

    # -- submissions -------------------------------------------------------------

    def submit_refinement(self, task_id: str, rater_id: str, text: str, base_revision: int) -> dict:
        task = self._open_task(task_id, rater_id, "refine")
        frame = self.store.load_frame(task["frame_id"])
        try:
            ast = markup.parse_caption(text)
        except markup.CaptionSyntaxError as err:
            raise ValidationRejected(
                {"syntax_errors": [[err.position, err.message]], "unknown_ids": [], "kind_mismatches": []}
            )
        record = CaptionRecord(
            caption_id=task["caption_id"],
            frame_id=task["frame_id"],
            source="human",
            text=text,
            revision=base_revision + 1,
            created_at=utc_now(),
            author=rater_id,
        )
        with self._assign_lock:
            if any(
                e["rater_id"] == rater_id
                for e in self.store.list_ratings()
                if e["caption_id"] == task["caption_id"]
            ):
                raise ConflictError("raters cannot refine captions they already rated")
            self.store.save_caption(record, expected_revision=base_revision)
            self.store.save_task({**task, "status": "done"}, expected_status="open")
        diag = markup.validate_against_frame(ast, frame)
        score = grounding_scores(markup.referenced_ids(ast), frame.object_ids)
        return {
            "revision": record.revision,
            "diagnostics": _diagnostics_json(diag, frame, ast),
            "grounding": {
                "tp": score.tp, "fp": score.fp, "fn": score.fn,
                "precision": score.precision, "recall": score.recall, "f1": score.f1,
            },
        }

    def submit_rating(self, task_id: str, rater_id: str, criteria: Sequence[int]) -> dict:
        task = self._open_task(task_id, rater_id, "rate")
        record = RatingRecord(
            caption_id=task["caption_id"], rater_id=rater_id, criteria=tuple(criteria)
        )
        with self._assign_lock:
            if rater_id in self.caption_authors(task["caption_id"]):
                raise ConflictError("raters cannot rate captions they authored or refined")
            revision = self.store.caption_latest_revision(task["caption_id"])
            self.store.save_task({**task, "status": "done"}, expected_status="open")
            self.store.append_rating(record, task_id=task_id, revision=revision)
        return {"caption_id": record.caption_id, "stored": True}

    def _open_task(self, task_id: str, rater_id: str, kind: str) -> dict:
        task = self.store.load_task(task_id)
        if task["kind"] != kind:
            raise ValueError(f"task {task_id} is a {task['kind']} task")
        if task["assigned_to"] != rater_id:
            raise PermissionError(f"task {task_id} belongs to {task['assigned_to']}")
        if task["status"] != "open":
            raise ConflictError(f"task {task_id} is already {task['status']}")
        return task

    # -- reports ---------------------------------------------------------------

    def agreement_report(self, source: Optional[str] = None) -> dict:
        """Per-source, per-criterion Krippendorff alpha and mean ratings."""
        events = self.store.list_ratings()
        by_source: Dict[str, List[dict]] = {}
        for event in events:
            record = self.store.load_caption(event["caption_id"], event.get("revision") or None)
            by_source.setdefault(record.source, []).append(event)
        sources = [source] if source else sorted(by_source)
        report = {}
        for src in sources:
            group = by_source.get(src, [])
            items = sorted({e["caption_id"] for e in group})
            raters = sorted({e["rater_id"] for e in group})
            criteria_report = {}
            for c_index, criterion in enumerate(RATING_CRITERIA):
                matrix = [
                    [
                        next(
                            (e["criteria"][c_index] for e in group
                             if e["rater_id"] == rater and e["caption_id"] == item),
                            None,
                        )
                        for item in items
                    ]
                    for rater in raters
                ]
                values = [e["criteria"][c_index] for e in group]
                mean = sum(values) / len(values) if values else None
                try:
                    alpha = krippendorff_alpha(matrix, level="ordinal")
                except InsufficientDataError:
                    alpha = None
                criteria_report[criterion] = {"alpha": alpha, "mean": mean, "n_ratings": len(values)}
            report[src] = criteria_report
        return {"criteria": list(RATING_CRITERIA), "sources": report}

    def metrics_report(
        self, candidate_source: str, reference_source: str, split: Optional[str] = None
    ) -> dict:
        """Corpus metrics of one caption source scored against another."""
        by_frame: Dict[str, Dict[str, CaptionRecord]] = {}
        for caption_id in self.store.list_captions():
            record = self.store.load_caption(caption_id)
            by_frame.setdefault(record.frame_id, {})[record.source] = record
        items = []
        for frame_id, records in sorted(by_frame.items()):
            if candidate_source not in records or reference_source not in records:
                continue
            frame = self.store.load_frame(frame_id)
            if split and frame.split != split:
                continue
            items.append(
                (frame_id, records[candidate_source].text, frame, records[reference_source].text)
            )
        corpus = score_corpus(items)
        return {
            "n_captions": len(corpus.per_item),
            "means": corpus.means,
            "gmeteor_corpus": corpus.gmeteor_corpus,
        }


class ValidationRejected(Exception):
    def __init__(self, diagnostics: dict):
        super().__init__("caption failed validation")
        self.diagnostics = diagnostics


def _diagnostics_json(diag: markup.Diagnostics, frame: Frame, ast) -> dict:
    refs = markup.referenced_ids(ast) if ast is not None else set()
    return {
        "syntax_errors": [list(e) for e in diag.syntax_errors],
        "unknown_ids": sorted(diag.unknown_ids),
        "kind_mismatches": [reason for _, reason in diag.kind_mismatches],
        "unreferenced_ids": sorted(frame.object_ids - refs),
    }


def create_app(config: ServiceConfig) -> FastAPI:
    service = AnnotationService(config)
    app = FastAPI(title="grounded caption annotation service")
    app.state.service = service

    def current_rater(request: Request) -> str:
        header = request.headers.get("Authorization", "")
        if not header.startswith("Bearer "):
            raise HTTPException(status_code=401, detail="missing bearer token")
        token = header.removeprefix("Bearer ")
        rater = config.tokens.get(token)
        if rater is None:
            raise HTTPException(status_code=401, detail="unknown token")
        return rater

    @app.get("/frames/{frame_id}")
    def get_frame(frame_id: str, rater: str = Depends(current_rater)):
        try:
            frame = service.store.load_frame(frame_id)
        except NotFoundError:
            raise HTTPException(status_code=404, detail=f"frame {frame_id} not found")
        return {
            "frame_id": frame.frame_id,
            "width": frame.width,
            "height": frame.height,
            "image_ref": frame.image_ref,
            "split": frame.split,
            "objects": [
                {
                    "object_id": o.object_id,
                    "class_name": o.class_name,
                    "box": {"x": o.box.x, "y": o.box.y, "w": o.box.w, "h": o.box.h},
                    "score": o.score,
                }
                for o in frame.objects
            ],
        }

    @app.get("/frames/{frame_id}/image")
    def get_frame_image(
        frame_id: str, box: Optional[str] = Query(default=None), rater: str = Depends(current_rater)
    ):
        try:
            frame = service.store.load_frame(frame_id)
        except NotFoundError:
            raise HTTPException(status_code=404, detail=f"frame {frame_id} not found")
        image_path = Path(frame.image_ref)
        if not image_path.is_absolute():
            image_path = service.store.frame_dir(frame_id) / image_path
        if not image_path.exists():
            raise HTTPException(status_code=404, detail="image file missing")
        if box is None:
            # whole image: the stored bytes, verbatim
            suffix = image_path.suffix.lower().lstrip(".") or "png"
            media = {"jpg": "jpeg"}.get(suffix, suffix)
            return Response(content=image_path.read_bytes(), media_type=f"image/{media}")
        try:
            x, y, w, h = (int(part) for part in box.split(","))
        except ValueError:
            raise HTTPException(status_code=400, detail="box must be x,y,w,h integers")
        from PIL import Image

        with Image.open(image_path) as img:
            if w < 1 or h < 1 or x < 0 or y < 0 or x + w > img.width or y + h > img.height:
                raise HTTPException(status_code=400, detail="box outside image bounds")
            crop = img.crop((x, y, x + w, y + h))
        buffer = io.BytesIO()
        crop.save(buffer, format="PNG")
        return Response(content=buffer.getvalue(), media_type="image/png")

    @app.post("/frames/{frame_id}/validation")
    def validate_caption(frame_id: str, body: dict, rater: str = Depends(current_rater)):
        """Live validation for editors: parse + check text, mutate nothing."""
        text = body.get("text")
        if not isinstance(text, str):
            raise HTTPException(status_code=400, detail="need text (str)")
        try:
            frame = service.store.load_frame(frame_id)
        except NotFoundError:
            raise HTTPException(status_code=404, detail=f"frame {frame_id} not found")
        try:
            ast = markup.parse_caption(text)
        except markup.CaptionSyntaxError as err:
            diag = markup.Diagnostics(syntax_errors=[(err.position, err.message)])
            return {"valid": False, "diagnostics": _diagnostics_json(diag, frame, None)}
        diag = markup.validate_against_frame(ast, frame)
        return {"valid": diag.ok, "diagnostics": _diagnostics_json(diag, frame, ast)}

    @app.get("/tasks/next")
    def next_task(kind: str, rater: str = Depends(current_rater)):
        try:
            task = service.next_task(rater, kind)
        except ValueError as err:
            raise HTTPException(status_code=400, detail=str(err))
        if task is None:
            return JSONResponse(status_code=200, content={"task": None})
        return {"task": task.to_json()}

    @app.post("/tasks/{task_id}/refinement")
    def submit_refinement(task_id: str, body: dict, rater: str = Depends(current_rater)):
        text = body.get("text")
        base_revision = body.get("base_revision")
        if not isinstance(text, str) or not isinstance(base_revision, int):
            raise HTTPException(status_code=400, detail="need text (str) and base_revision (int)")
        try:
            return service.submit_refinement(task_id, rater, text, base_revision)
        except ValidationRejected as err:
            return JSONResponse(status_code=422, content={"diagnostics": err.diagnostics})
        except ConflictError as err:
            raise HTTPException(status_code=409, detail=str(err))
        except NotFoundError as err:
            raise HTTPException(status_code=404, detail=str(err))
        except PermissionError as err:
            raise HTTPException(status_code=403, detail=str(err))
        except ValueError as err:
            raise HTTPException(status_code=400, detail=str(err))

    @app.post("/tasks/{task_id}/rating")
    def submit_rating(task_id: str, body: dict, rater: str = Depends(current_rater)):
        criteria = body.get("criteria")
        if not isinstance(criteria, list) or len(criteria) != 5 or not all(
            isinstance(c, int) for c in criteria
        ):
            raise HTTPException(status_code=400, detail="criteria must be five integers")
        try:
            return service.submit_rating(task_id, rater, criteria)
        except ConflictError as err:
            raise HTTPException(status_code=409, detail=str(err))
        except NotFoundError as err:
            raise HTTPException(status_code=404, detail=str(err))
        except PermissionError as err:
            raise HTTPException(status_code=403, detail=str(err))
        except ValueError as err:
            raise HTTPException(status_code=400, detail=str(err))

    @app.get("/reports/agreement")
    def agreement(source: Optional[str] = None, rater: str = Depends(current_rater)):
        return service.agreement_report(source)

    @app.get("/reports/metrics")
    def metrics(
        candidate: str = "model",
        reference: str = "auto",
        split: Optional[str] = None,
        rater: str = Depends(current_rater),
    ):
        return service.metrics_report(candidate, reference, split)

    return app
