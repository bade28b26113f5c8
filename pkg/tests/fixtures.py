"""Shared test fixtures: frames, masks, and caption generators."""

from __future__ import annotations

import random
from typing import Dict, Iterable, List, Sequence, Set, Tuple

from gdcap.geometry import Box, Mask
from gdcap.markup import CaptionAst, PlainText, TagKind, TagSpan
from gdcap.model import Frame, SceneObject

# Grounded caption exercising every tag kind, multi-id spans, and repeated ids
# (bald-man example: two persons, a three-part wall, one window).
EXAMPLE_CAPTION = (
    'In this dimly lit room, <gdo class="person" person-0>a bald man</gdo> '
    '<gda class="frown" person-0>frowns</gda> with a serious expression. '
    'He is positioned near <gdl class="wall" wall-0 wall-1 wall-2>the walls</gdl> of the room, '
    'which are adorned with <gdo class="window" window-0>windows</gdo> that let in a small '
    'amount of light. <gdo class="person" person-1>Another individual</gdo> is partially '
    'visible on the right side of the image. The overall atmosphere is one of quiet intensity, '
    'with the <gdo class="person" person-0>man\'s</gdo> expression suggesting a moment of '
    'contemplation or concern.'
)
EXAMPLE_CAPTION_IDS = {"person-0", "person-1", "wall-0", "wall-1", "wall-2", "window-0"}


def make_frame(object_ids: Sequence[str], frame_id: str = "frame-0", size: int = 100) -> Frame:
    """Frame whose objects carry the given ids (boxes placed on a grid)."""
    objects = []
    for i, object_id in enumerate(object_ids):
        cls = object_id.rsplit("-", 1)[0]
        x = (i * 17) % (size - 10)
        y = (i * 23) % (size - 10)
        objects.append(
            SceneObject(object_id=object_id, class_name=cls, box=Box(x, y, 8, 8),
                        source_detection=i, score=0.9)
        )
    return Frame(frame_id=frame_id, width=size, height=size, image_ref="image.png",
                 objects=tuple(objects))


EXAMPLE_FRAME = make_frame(sorted(EXAMPLE_CAPTION_IDS))


def blob_pixels(cx: int, cy: int, w: int, h: int) -> Set[Tuple[int, int]]:
    """Solid rectangle of pixels centered near (cx, cy)."""
    x0, y0 = cx - w // 2, cy - h // 2
    return {(x, y) for x in range(x0, x0 + w) for y in range(y0, y0 + h)}


def make_mask(pixels: Iterable[Tuple[int, int]], size: int = 200) -> Mask:
    return Mask.from_pixels(size, size, pixels)


_CLASSES = ("person", "car", "tree", "building", "dog", "sky", "road", "wall")
_WORDS = (
    "the", "a", "man", "woman", "stands", "walks", "near", "beside", "tall", "dark",
    "bright", "street", "scene", "looks", "toward", "quiet", "red", "old", "watches",
    "holds", "small", "large", "light", "shadow", "moves", "waits",
)


def random_caption_ast(rng: random.Random, object_ids: Sequence[str]) -> CaptionAst:
    """Random valid caption AST over the given ids (for round-trip tests)."""
    segments = []
    n_spans = rng.randint(1, 5)
    need_text = rng.random() < 0.7
    for _ in range(n_spans):
        if need_text:
            words = " ".join(rng.choices(_WORDS, k=rng.randint(1, 5)))
            segments.append(PlainText(words + " "))
        kind = rng.choice(list(TagKind))
        ids = tuple(rng.sample(list(object_ids), k=rng.randint(1, min(3, len(object_ids)))))
        if kind is TagKind.GDA:
            class_attr = rng.choice(("walk", "run", "sit", "frown", "hold"))
        else:
            class_attr = ids[0].rsplit("-", 1)[0]
        text = " ".join(rng.choices(_WORDS, k=rng.randint(1, 4)))
        segments.append(TagSpan(kind, class_attr, ids, text))
        need_text = True
    if rng.random() < 0.8:
        segments.append(PlainText("."))
    return CaptionAst(tuple(segments))


def random_sentence(rng: random.Random, length: int) -> List[str]:
    return rng.choices(_WORDS, k=length)


def random_object_ids(rng: random.Random, max_objects: int = 8) -> List[str]:
    counters: Dict[str, int] = {}
    ids = []
    for _ in range(rng.randint(1, max_objects)):
        cls = rng.choice(_CLASSES)
        n = counters.get(cls, 0)
        counters[cls] = n + 1
        ids.append(f"{cls}-{n}")
    return ids
