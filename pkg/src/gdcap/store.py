"""File-backed record store: label-map ingestion, frames, captions, ratings.

Layout under a store root::

    frames/<frame_id>/frame.json          ordered scene objects
    frames/<frame_id>/detections.json     per-segment class/kind/score/boxes
    frames/<frame_id>/labelmap.{pgm,pam}  segment index map (pixel truth)
    frames/<frame_id>/legend.json         segment index -> class/kind/score
    captions/<caption_id>/<revision>.json caption revisions (append-only)
    ratings.log                           JSONL rating events
    tasks/<task_id>.json                  annotation task records
    splits.json                           frame_id -> train|eval

Every JSON record is wrapped with a sha256 checksum and written via a
temp-file rename, so readers only ever see complete records.  Caption saves
are compare-and-swap on revision; a store-wide lock serializes writers in
process while the rename keeps crashes safe.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import random
import re
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .decomposition import DecompositionParams, decompose_stuff
from .errors import ConflictError, CorruptRecordError, IngestError, NotFoundError
from .geometry import Box, Mask, mask_tight_box
from .markup import parse_caption
from .model import Detection, DetectionKind, Frame, RatingRecord, SceneObject

CAPTION_SOURCES = ("auto", "human", "model")


def utc_now() -> str:
    """UTC timestamp at second resolution."""
    return datetime.now(timezone.utc).replace(microsecond=0).isoformat()


# ---------------------------------------------------------------------------
# label maps: binary PGM (P5) for <= 255 segments, PAM (P7) 16-bit above


def write_label_map(path: Path, label_map: np.ndarray) -> None:
    label_map = np.asarray(label_map)
    if label_map.ndim != 2:
        raise ValueError("label map must be 2-D")
    if label_map.min() < 0:
        raise ValueError("label map values must be non-negative")
    height, width = label_map.shape
    max_value = int(label_map.max())
    path = Path(path)
    if max_value <= 255:
        header = f"P5\n{width} {height}\n255\n".encode("ascii")
        body = label_map.astype(np.uint8).tobytes()
    else:
        header = (
            f"P7\nWIDTH {width}\nHEIGHT {height}\nDEPTH 1\nMAXVAL 65535\n"
            "TUPLTYPE GRAYSCALE\nENDHDR\n"
        ).encode("ascii")
        body = label_map.astype(">u2").tobytes()
    _atomic_write_bytes(path, header + body)


def read_label_map(path: Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data.startswith(b"P5"):
        return _read_pgm(data)
    if data.startswith(b"P7"):
        return _read_pam(data)
    raise IngestError(f"unsupported label map format in {path}")


def _read_pgm(data: bytes) -> np.ndarray:
    # header tokens may be separated by arbitrary whitespace and # comments
    tokens: List[bytes] = []
    pos = 2  # skip magic
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    width, height, maxval = (int(t) for t in tokens)
    dtype = np.uint8 if maxval <= 255 else np.dtype(">u2")
    count = width * height
    arr = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
    return arr.reshape(height, width).astype(np.int64)


def _read_pam(data: bytes) -> np.ndarray:
    end = data.index(b"ENDHDR\n") + len(b"ENDHDR\n")
    header = data[:end].decode("ascii")
    fields = dict(
        line.split(None, 1) for line in header.splitlines()[1:-1] if not line.startswith("#")
    )
    width, height = int(fields["WIDTH"]), int(fields["HEIGHT"])
    if fields.get("TUPLTYPE", "GRAYSCALE") != "GRAYSCALE" or int(fields.get("DEPTH", 1)) != 1:
        raise IngestError("only single-channel grayscale PAM label maps are supported")
    maxval = int(fields.get("MAXVAL", 65535))
    dtype = np.uint8 if maxval <= 255 else np.dtype(">u2")
    arr = np.frombuffer(data, dtype=dtype, count=width * height, offset=end)
    return arr.reshape(height, width).astype(np.int64)


# ---------------------------------------------------------------------------
# legend


@dataclass(frozen=True)
class LabelMapLegend:
    """Sidecar for a label map: segment index -> (class, kind, score)."""

    width: int
    height: int
    segments: Dict[int, Tuple[str, DetectionKind, float]]

    def __post_init__(self) -> None:
        indices = sorted(self.segments)
        if indices != list(range(1, len(indices) + 1)):
            raise IngestError(f"segment indices must be dense from 1, got {indices}")
        for index, (_, _, score) in self.segments.items():
            if not 0.0 <= score <= 1.0:
                raise IngestError(f"segment {index} score {score} outside [0, 1]")


def write_legend(path: Path, legend: LabelMapLegend) -> None:
    doc = {
        "width": legend.width,
        "height": legend.height,
        "segments": {
            str(i): {"class": cls, "kind": kind.value, "score": score}
            for i, (cls, kind, score) in legend.segments.items()
        },
    }
    _atomic_write_bytes(Path(path), json.dumps(doc, indent=2, sort_keys=True).encode("utf-8"))


def read_legend(path: Path, vocabulary: Optional[Iterable[str]] = None) -> LabelMapLegend:
    doc = json.loads(Path(path).read_text("utf-8"))
    vocab = set(vocabulary) if vocabulary is not None else None
    segments = {}
    for key, entry in doc["segments"].items():
        cls = entry["class"]
        if vocab is not None and cls not in vocab:
            raise IngestError(f"class {cls!r} not in the configured vocabulary")
        segments[int(key)] = (cls, DetectionKind(entry["kind"]), float(entry["score"]))
    return LabelMapLegend(width=int(doc["width"]), height=int(doc["height"]), segments=segments)


def ingest_segmentation(
    labelmap_path: Path,
    legend_path: Path,
    params: DecompositionParams = DecompositionParams(),
    decompose: bool = True,
    vocabulary: Optional[Iterable[str]] = None,
) -> List[Detection]:
    """Turn a label map + legend into Detections.

    Things get their tight box; stuff segments are decomposed into 1-6 boxes
    (skipped when ``decompose`` is false, leaving the box list empty for a
    later pass).
    """
    label_map = read_label_map(labelmap_path)
    legend = read_legend(legend_path, vocabulary)
    height, width = label_map.shape
    if (width, height) != (legend.width, legend.height):
        raise IngestError(
            f"label map is {width}x{height} but legend says {legend.width}x{legend.height}"
        )
    present = {int(v) for v in np.unique(label_map) if v != 0}
    unknown = present - set(legend.segments)
    if unknown:
        raise IngestError(f"label map contains indices missing from legend: {sorted(unknown)}")

    detections = []
    for index in sorted(legend.segments):
        cls, kind, score = legend.segments[index]
        ys, xs = np.nonzero(label_map == index)
        if len(xs) == 0:
            raise IngestError(f"segment {index} ({cls}) has no pixels")
        mask = Mask.from_pixels(width, height, zip(xs.tolist(), ys.tolist()))
        if kind is DetectionKind.THING:
            boxes: Tuple[Box, ...] = (mask_tight_box(mask),)
        elif decompose:
            boxes = decompose_stuff(mask, params).boxes
        else:
            boxes = ()
        detections.append(Detection(class_name=cls, kind=kind, score=score, mask=mask, boxes=boxes))
    return detections


# ---------------------------------------------------------------------------
# records


@dataclass(frozen=True)
class CaptionRecord:
    caption_id: str
    frame_id: str
    source: str  # auto | human | model
    text: str
    revision: int
    created_at: str
    author: Optional[str] = None  # rater id for human revisions

    def __post_init__(self) -> None:
        if self.source not in CAPTION_SOURCES:
            raise ValueError(f"source must be one of {CAPTION_SOURCES}, got {self.source!r}")
        if self.revision < 1:
            raise ValueError("revision must be >= 1")


def _atomic_write_bytes(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def _checksum(payload: dict) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _write_record(path: Path, payload: dict) -> None:
    doc = {"record": payload, "checksum": _checksum(payload)}
    _atomic_write_bytes(path, json.dumps(doc, indent=2, sort_keys=True).encode("utf-8"))


def _read_record(path: Path) -> dict:
    if not path.exists():
        raise NotFoundError(str(path))
    doc = json.loads(path.read_text("utf-8"))
    payload = doc["record"]
    if _checksum(payload) != doc.get("checksum"):
        raise CorruptRecordError(f"checksum mismatch in {path}")
    return payload


def _box_to_json(box: Box) -> dict:
    return {"x": box.x, "y": box.y, "w": box.w, "h": box.h}


def _box_from_json(doc: dict) -> Box:
    return Box(doc["x"], doc["y"], doc["w"], doc["h"])


class FrameStore:
    """Directory-backed record store with CAS writes and checksummed reads."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.RLock()

    # -- frames ------------------------------------------------------------

    def frame_dir(self, frame_id: str) -> Path:
        if not re.match(r"^[A-Za-z0-9._-]+$", frame_id):
            raise ValueError(f"unsafe frame id {frame_id!r}")
        return self.root / "frames" / frame_id

    def save_frame(self, frame: Frame) -> None:
        payload = {
            "frame_id": frame.frame_id,
            "width": frame.width,
            "height": frame.height,
            "image_ref": frame.image_ref,
            "split": frame.split,
            "objects": [
                {
                    "object_id": o.object_id,
                    "class_name": o.class_name,
                    "box": _box_to_json(o.box),
                    "source_detection": o.source_detection,
                    "score": o.score,
                }
                for o in frame.objects
            ],
        }
        with self._lock:
            _write_record(self.frame_dir(frame.frame_id) / "frame.json", payload)

    def load_frame(self, frame_id: str) -> Frame:
        payload = _read_record(self.frame_dir(frame_id) / "frame.json")
        objects = tuple(
            SceneObject(
                object_id=o["object_id"],
                class_name=o["class_name"],
                box=_box_from_json(o["box"]),
                source_detection=o["source_detection"],
                score=o["score"],
            )
            for o in payload["objects"]
        )
        return Frame(
            frame_id=payload["frame_id"],
            width=payload["width"],
            height=payload["height"],
            image_ref=payload["image_ref"],
            objects=objects,
            split=payload["split"],
        )

    def list_frames(self) -> List[str]:
        frames_dir = self.root / "frames"
        if not frames_dir.exists():
            return []
        return sorted(p.name for p in frames_dir.iterdir() if (p / "frame.json").exists())

    def list_frame_dirs(self) -> List[str]:
        """Frame ids with any stored records (frame.json not yet required)."""
        frames_dir = self.root / "frames"
        if not frames_dir.exists():
            return []
        return sorted(p.name for p in frames_dir.iterdir() if p.is_dir())

    # -- detections ----------------------------------------------------------

    def save_detections(self, frame_id: str, detections: Sequence[Detection]) -> None:
        payload = {
            "frame_id": frame_id,
            "detections": [
                {
                    "segment_index": i + 1,
                    "class_name": d.class_name,
                    "kind": d.kind.value,
                    "score": d.score,
                    "boxes": [_box_to_json(b) for b in d.boxes],
                }
                for i, d in enumerate(detections)
            ],
        }
        with self._lock:
            _write_record(self.frame_dir(frame_id) / "detections.json", payload)

    def load_detections(self, frame_id: str) -> List[Detection]:
        """Rebuild detections: boxes from the record, masks from the label map."""
        payload = _read_record(self.frame_dir(frame_id) / "detections.json")
        label_map = read_label_map(self.labelmap_path(frame_id))
        height, width = label_map.shape
        detections = []
        for entry in payload["detections"]:
            ys, xs = np.nonzero(label_map == entry["segment_index"])
            mask = Mask.from_pixels(width, height, zip(xs.tolist(), ys.tolist()))
            detections.append(
                Detection(
                    class_name=entry["class_name"],
                    kind=DetectionKind(entry["kind"]),
                    score=entry["score"],
                    mask=mask,
                    boxes=tuple(_box_from_json(b) for b in entry["boxes"]),
                )
            )
        return detections

    def labelmap_path(self, frame_id: str) -> Path:
        for name in ("labelmap.pgm", "labelmap.pam"):
            candidate = self.frame_dir(frame_id) / name
            if candidate.exists():
                return candidate
        raise NotFoundError(f"no label map stored for frame {frame_id}")

    # -- captions ------------------------------------------------------------

    def _caption_dir(self, caption_id: str) -> Path:
        if not re.match(r"^[A-Za-z0-9._-]+$", caption_id):
            raise ValueError(f"unsafe caption id {caption_id!r}")
        return self.root / "captions" / caption_id

    def caption_latest_revision(self, caption_id: str) -> int:
        directory = self._caption_dir(caption_id)
        if not directory.exists():
            return 0
        revisions = [int(p.stem) for p in directory.glob("*.json")]
        return max(revisions, default=0)

    def save_caption(self, record: CaptionRecord, expected_revision: int) -> CaptionRecord:
        """Compare-and-swap append of a caption revision.

        ``expected_revision`` is the latest revision the writer saw (0 for a
        new caption); the saved record must carry expected_revision + 1.
        Caption text must parse as grounding markup (records never hold
        malformed captions).
        """
        parse_caption(record.text)  # raises CaptionSyntaxError on malformed markup
        if record.revision != expected_revision + 1:
            raise ConflictError(
                f"record revision {record.revision} does not follow expected {expected_revision}"
            )
        with self._lock:
            latest = self.caption_latest_revision(record.caption_id)
            if latest != expected_revision:
                raise ConflictError(
                    f"caption {record.caption_id} is at revision {latest}, expected {expected_revision}"
                )
            _write_record(
                self._caption_dir(record.caption_id) / f"{record.revision}.json",
                dataclasses.asdict(record),
            )
        return record

    def load_caption(self, caption_id: str, revision: Optional[int] = None) -> CaptionRecord:
        if revision is None:
            revision = self.caption_latest_revision(caption_id)
            if revision == 0:
                raise NotFoundError(f"caption {caption_id} does not exist")
        payload = _read_record(self._caption_dir(caption_id) / f"{revision}.json")
        return CaptionRecord(**payload)

    def caption_revisions(self, caption_id: str) -> List[CaptionRecord]:
        latest = self.caption_latest_revision(caption_id)
        return [self.load_caption(caption_id, r) for r in range(1, latest + 1)]

    def list_captions(self) -> List[str]:
        captions_dir = self.root / "captions"
        if not captions_dir.exists():
            return []
        return sorted(p.name for p in captions_dir.iterdir() if p.is_dir())

    # -- ratings (append-only event log) --------------------------------------

    def append_rating(self, record: RatingRecord, task_id: str, revision: int) -> None:
        event = {
            "caption_id": record.caption_id,
            "rater_id": record.rater_id,
            "criteria": list(record.criteria),
            "task_id": task_id,
            "revision": revision,
            "created_at": utc_now(),
        }
        line = json.dumps(event, sort_keys=True) + "\n"
        with self._lock:
            path = self.root / "ratings.log"
            with open(path, "a", encoding="utf-8") as fh:
                fh.write(line)
                fh.flush()
                os.fsync(fh.fileno())

    def list_ratings(self) -> List[dict]:
        path = self.root / "ratings.log"
        if not path.exists():
            return []
        events = []
        for line in path.read_text("utf-8").splitlines():
            if line.strip():
                events.append(json.loads(line))
        return events

    # -- tasks -----------------------------------------------------------------

    def save_task(self, task: dict, expected_status: Optional[str]) -> None:
        """CAS on task status: ``expected_status`` None means 'must not exist'."""
        task_id = task["task_id"]
        if not re.match(r"^[A-Za-z0-9._-]+$", task_id):
            raise ValueError(f"unsafe task id {task_id!r}")
        path = self.root / "tasks" / f"{task_id}.json"
        with self._lock:
            if expected_status is None:
                if path.exists():
                    raise ConflictError(f"task {task_id} already exists")
            else:
                current = _read_record(path)
                if current["status"] != expected_status:
                    raise ConflictError(
                        f"task {task_id} is {current['status']}, expected {expected_status}"
                    )
            _write_record(path, task)

    def load_task(self, task_id: str) -> dict:
        return _read_record(self.root / "tasks" / f"{task_id}.json")

    def list_tasks(self) -> List[dict]:
        tasks_dir = self.root / "tasks"
        if not tasks_dir.exists():
            return []
        return [_read_record(p) for p in sorted(tasks_dir.glob("*.json"))]

    # -- splits ------------------------------------------------------------------

    def save_splits(self, table: Dict[str, str]) -> None:
        with self._lock:
            _write_record(self.root / "splits.json", {"splits": table})

    def load_splits(self) -> Dict[str, str]:
        return _read_record(self.root / "splits.json")["splits"]


def assign_splits(frame_ids: Sequence[str], eval_fraction: float, seed: int) -> Dict[str, str]:
    """Deterministic seeded train/eval partition; eval share within one frame of exact."""
    if not 0.0 < eval_fraction < 1.0:
        raise ValueError("eval_fraction must be in (0, 1)")
    ids = sorted(frame_ids)
    rng = random.Random(seed)
    rng.shuffle(ids)
    n_eval = round(eval_fraction * len(ids))
    table = {}
    for i, frame_id in enumerate(ids):
        table[frame_id] = "eval" if i < n_eval else "train"
    return table
