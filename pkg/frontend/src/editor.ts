/**
 * Editor state for the refinement view: the caption buffer, the current
 * selection, bind/unbind operations, and the bound-id bookkeeping that keeps
 * box overlays and text highlights in sync.
 *
 * Box overlay colors and in-text span colors always agree per tag kind:
 * objects blue, actions red, locations green.
 */

import {
  ParseResult,
  Segment,
  TagKind,
  TagSegment,
  objectIdClass,
  parseBuffer,
  referencedIds,
  serializeTag,
} from "./markup.js";

export const TAG_COLORS: Record<TagKind, string> = {
  gdo: "#2563eb", // objects: blue
  gda: "#dc2626", // actions: red
  gdl: "#16a34a", // locations: green
};

export const UNBOUND_COLOR = "#9ca3af";

export interface Selection {
  start: number;
  end: number;
}

export interface Diagnostics {
  syntaxErrors: [number, string][];
  unknownIds: string[];
  kindMismatches: string[];
  unreferencedIds: string[];
}

export type BindOutcome = { ok: true; buffer: string } | { ok: false; reason: string };

export class EditorState {
  buffer: string;
  baseRevision: number;
  selection: Selection | null = null;
  pendingKind: TagKind = "gdo";
  diagnostics: Diagnostics | null = null;
  dirty = false;
  serviceUnreachable = false;

  constructor(buffer: string, baseRevision: number) {
    this.buffer = buffer;
    this.baseRevision = baseRevision;
  }

  /** Segments of the current buffer, or null when it does not parse. */
  get segments(): Segment[] | null {
    const parsed: ParseResult = parseBuffer(this.buffer);
    return parsed.ok ? parsed.segments : null;
  }

  /** Buffer parses under the tag grammar (invalid buffers stay editable, flagged). */
  get parseable(): boolean {
    return parseBuffer(this.buffer).ok;
  }

  /** Ids currently bound in the text; drives both highlights and overlays. */
  boundIds(): Set<string> {
    return referencedIds(this.buffer);
  }

  setSelection(start: number, end: number): void {
    this.selection = start < end ? { start, end } : null;
  }

  /**
   * A selection is bindable when it is non-empty and lies entirely inside a
   * single plain-text segment (never crossing an existing tag boundary).
   */
  canBind(selection: Selection | null = this.selection): BindOutcome {
    if (!selection || selection.start >= selection.end) {
      return { ok: false, reason: "select some caption text first" };
    }
    const segments = this.segments;
    if (!segments) return { ok: false, reason: "fix the malformed tag before binding" };
    for (const segment of segments) {
      if (segment.type !== "text") continue;
      if (selection.start >= segment.start && selection.end <= segment.end) {
        return { ok: true, buffer: this.buffer };
      }
    }
    return { ok: false, reason: "selection crosses a tag boundary" };
  }

  /**
   * Wrap the current selection in a grounding tag. For gdo/gdl the class
   * attribute is derived from the first chosen id; gda names an action, so
   * the caller supplies it.
   */
  bindSelection(kind: TagKind, objectIds: string[], actionClass?: string): BindOutcome {
    const guard = this.canBind();
    if (!guard.ok) return guard;
    if (!objectIds.length) return { ok: false, reason: "choose at least one object" };
    const { start, end } = this.selection as Selection;
    const text = this.buffer.slice(start, end);
    if (text.includes("<") || text.includes(">")) {
      return { ok: false, reason: "selection contains tag delimiters" };
    }
    const classAttr = kind === "gda" ? actionClass ?? "" : objectIdClass(objectIds[0]);
    if (!classAttr) return { ok: false, reason: "action tags need an action class" };
    const tag = serializeTag(kind, classAttr, objectIds, text);
    this.buffer = this.buffer.slice(0, start) + tag + this.buffer.slice(end);
    this.selection = null;
    this.dirty = true;
    return { ok: true, buffer: this.buffer };
  }

  /** The tag segment covering a buffer offset, if any. */
  spanAt(offset: number): TagSegment | null {
    const segments = this.segments;
    if (!segments) return null;
    for (const segment of segments) {
      if (segment.type === "tag" && offset >= segment.start && offset < segment.end) {
        return segment;
      }
    }
    return null;
  }

  /** Replace a tag with its inner text; exact inverse of bindSelection. */
  unbindSpan(span: TagSegment): BindOutcome {
    const current = this.buffer.slice(span.start, span.end);
    const expected = serializeTag(span.kind, span.classAttr, span.refIds, span.text);
    if (current !== expected) return { ok: false, reason: "stale span reference" };
    this.buffer = this.buffer.slice(0, span.start) + span.text + this.buffer.slice(span.end);
    this.selection = null;
    this.dirty = true;
    return { ok: true, buffer: this.buffer };
  }

  /** Overlay color for an object id: the kind of the first span binding it. */
  colorFor(objectId: string): string {
    const segments = this.segments;
    if (segments) {
      for (const segment of segments) {
        if (segment.type === "tag" && segment.refIds.includes(objectId)) {
          return TAG_COLORS[segment.kind];
        }
      }
    }
    return UNBOUND_COLOR;
  }

  applyDiagnostics(diagnostics: Diagnostics | null, unreachable = false): void {
    this.diagnostics = diagnostics;
    this.serviceUnreachable = unreachable;
  }
}
