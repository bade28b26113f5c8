"""Grounding tag markup: parse, validate, and serialize grounded captions.

A grounded caption is plain UTF-8 text interleaved with ASCII grounding tags::

    He leans on <gdo class="car" car-0>the red car</gdo>.

Three tag names exist: ``gdo`` (objects), ``gda`` (actions), ``gdl``
(locations).  An open tag carries a quoted ``class`` attribute followed by one
or more object ids of the form ``<class>-<n>``.  Tags never nest.  The parser
is strict: a malformed tag is a positioned syntax error, never auto-repaired,
because downstream refinement treats malformed tags as feedback items.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import List, Sequence, Set, Tuple, Union

from .errors import GdcapError
from .model import OBJECT_ID_RE, Frame, object_id_class

TAG_NAMES = ("gdo", "gda", "gdl")
_STRIP_TAGS_RE = re.compile(r"</?(?:gdo|gda|gdl)\b[^>]*>")


class TagKind(enum.Enum):
    GDO = "gdo"
    GDA = "gda"
    GDL = "gdl"


class CaptionSyntaxError(GdcapError):
    """Malformed grounding markup, with the character offset of the problem."""

    def __init__(self, position: int, message: str):
        super().__init__(f"at {position}: {message}")
        self.position = position
        self.message = message


@dataclass(frozen=True)
class PlainText:
    text: str


@dataclass(frozen=True)
class TagSpan:
    kind: TagKind
    class_attr: str
    ref_ids: Tuple[str, ...]
    text: str

    def __post_init__(self) -> None:
        if not self.ref_ids:
            raise ValueError("tag span needs at least one object id")
        for ref in self.ref_ids:
            if not OBJECT_ID_RE.match(ref):
                raise ValueError(f"malformed object id {ref!r}")
        if not self.text:
            raise ValueError("tag span text must be non-empty")
        if "<" in self.text or ">" in self.text:
            raise ValueError("tag span text must not contain tag delimiters")


Segment = Union[PlainText, TagSpan]


@dataclass(frozen=True)
class CaptionAst:
    """Alternating plain-text and tag-span segments of a grounded caption."""

    segments: Tuple[Segment, ...]

    def __post_init__(self) -> None:
        previous_plain = False
        for seg in self.segments:
            if isinstance(seg, PlainText):
                if not seg.text:
                    raise ValueError("empty plain-text segment")
                if previous_plain:
                    raise ValueError("adjacent plain-text segments must be merged")
                previous_plain = True
            else:
                previous_plain = False

    def spans(self) -> List[TagSpan]:
        return [seg for seg in self.segments if isinstance(seg, TagSpan)]


@dataclass
class Diagnostics:
    """Validation results; empty diagnostics means the caption is valid."""

    syntax_errors: List[Tuple[int, str]] = field(default_factory=list)
    unknown_ids: Set[str] = field(default_factory=set)
    kind_mismatches: List[Tuple[TagSpan, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (self.syntax_errors or self.unknown_ids or self.kind_mismatches)


class _Scanner:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def eof(self) -> bool:
        return self.pos >= len(self.text)

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def take_while(self, predicate) -> str:
        start = self.pos
        while self.pos < len(self.text) and predicate(self.text[self.pos]):
            self.pos += 1
        return self.text[start : self.pos]

    def expect(self, literal: str, message: str) -> None:
        if not self.text.startswith(literal, self.pos):
            raise CaptionSyntaxError(self.pos, message)
        self.pos += len(literal)


def _parse_open_tag(sc: _Scanner) -> Tuple[TagKind, str, Tuple[str, ...]]:
    # caller consumed '<'; tag name starts at sc.pos
    name_start = sc.pos
    name = sc.take_while(str.isalpha)
    if name not in TAG_NAMES:
        raise CaptionSyntaxError(name_start, f"unknown tag name {name!r}")
    kind = TagKind(name)

    spaces = sc.take_while(lambda c: c == " ")
    if not spaces:
        raise CaptionSyntaxError(sc.pos, "expected space after tag name")
    attr_start = sc.pos
    sc.expect('class="', "missing class attribute")
    value = sc.take_while(lambda c: c not in '"<>')
    sc.expect('"', "unterminated class attribute")
    if not value:
        raise CaptionSyntaxError(attr_start, "empty class attribute")

    ids: List[str] = []
    while True:
        spaces = sc.take_while(lambda c: c == " ")
        if sc.peek() == ">":
            sc.pos += 1
            break
        if not spaces or sc.eof():
            raise CaptionSyntaxError(sc.pos, "expected space-separated object ids then '>'")
        id_start = sc.pos
        token = sc.take_while(lambda c: c not in " ><")
        if not OBJECT_ID_RE.match(token):
            raise CaptionSyntaxError(id_start, f"invalid object id {token!r}")
        ids.append(token)
    if not ids:
        raise CaptionSyntaxError(sc.pos - 1, "empty id list")
    return kind, value, tuple(ids)


def parse_caption(text: str) -> CaptionAst:
    """Parse grounded caption text into its AST.

    Plain text outside tags is preserved byte-for-byte; the open tag's
    internal whitespace is normalized away (the AST serializes canonically).
    Raises :class:`CaptionSyntaxError` on the first grammar violation.
    """
    sc = _Scanner(text)
    segments: List[Segment] = []
    plain_start = 0

    def flush_plain(end: int) -> None:
        if end > plain_start:
            chunk = text[plain_start:end]
            if segments and isinstance(segments[-1], PlainText):
                segments[-1] = PlainText(segments[-1].text + chunk)
            else:
                segments.append(PlainText(chunk))

    while not sc.eof():
        ch = sc.peek()
        if ch != "<":
            sc.pos += 1
            continue
        tag_start = sc.pos
        flush_plain(tag_start)
        sc.pos += 1
        if sc.peek() == "/":
            raise CaptionSyntaxError(tag_start, "closing tag without an open tag")
        kind, class_attr, ids = _parse_open_tag(sc)

        text_start = sc.pos
        while True:
            if sc.eof():
                raise CaptionSyntaxError(tag_start, f"unclosed <{kind.value}> tag")
            ch = sc.peek()
            if ch == "<":
                break
            if ch == ">":
                raise CaptionSyntaxError(sc.pos, "tag delimiter '>' inside span text")
            sc.pos += 1
        span_text = text[text_start : sc.pos]
        close_start = sc.pos
        if sc.text.startswith("</", sc.pos):
            sc.pos += 2
            close_name = sc.take_while(str.isalpha)
            if close_name not in TAG_NAMES:
                raise CaptionSyntaxError(close_start, f"unknown closing tag {close_name!r}")
            if close_name != kind.value:
                raise CaptionSyntaxError(
                    close_start, f"mismatched closing tag </{close_name}> for <{kind.value}>"
                )
            sc.expect(">", "malformed closing tag")
        else:
            raise CaptionSyntaxError(close_start, "nested tag inside span text")
        if not span_text:
            raise CaptionSyntaxError(text_start, "empty span text")
        segments.append(TagSpan(kind, class_attr, ids, span_text))
        plain_start = sc.pos

    flush_plain(len(text))
    return CaptionAst(tuple(segments))


def serialize_caption(ast: CaptionAst) -> str:
    """Canonical text for an AST: parse(serialize(ast)) == ast."""
    parts: List[str] = []
    for seg in ast.segments:
        if isinstance(seg, PlainText):
            parts.append(seg.text)
        else:
            ids = " ".join(seg.ref_ids)
            parts.append(f'<{seg.kind.value} class="{seg.class_attr}" {ids}>{seg.text}</{seg.kind.value}>')
    return "".join(parts)


def referenced_ids(ast: CaptionAst) -> Set[str]:
    """All object ids referenced by any span of any kind, deduplicated."""
    ids: Set[str] = set()
    for span in ast.spans():
        ids.update(span.ref_ids)
    return ids


def validate_against_frame(ast: CaptionAst, frame: Frame) -> Diagnostics:
    """Check a parsed caption against a frame's object set.

    GDO/GDL spans must carry ids whose class part matches the tag's class
    attribute; GDA is exempt (its class names an action, not an object class).
    """
    diag = Diagnostics()
    known = frame.object_ids
    for span in ast.spans():
        for ref in span.ref_ids:
            if ref not in known:
                diag.unknown_ids.add(ref)
        if span.kind in (TagKind.GDO, TagKind.GDL):
            for ref in span.ref_ids:
                id_class = object_id_class(ref)
                if id_class != span.class_attr:
                    diag.kind_mismatches.append(
                        (span, f"id {ref} has class {id_class!r}, tag says {span.class_attr!r}")
                    )
    return diag


def validate_text(text: str, frame: Frame) -> Diagnostics:
    """Parse then validate; parse failures land in ``syntax_errors``."""
    try:
        ast = parse_caption(text)
    except CaptionSyntaxError as err:
        return Diagnostics(syntax_errors=[(err.position, err.message)])
    return validate_against_frame(ast, frame)


def strip_tags(text: str) -> str:
    """Remove grounding markup, keeping span text (for language metrics).

    Regex-based so it also works on captions that do not fully parse.
    """
    return _STRIP_TAGS_RE.sub("", text)
