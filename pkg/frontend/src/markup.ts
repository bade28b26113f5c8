/**
 * Client-side scanner for grounding tag markup.
 *
 * Mirrors the service grammar closely enough for highlighting, selection
 * guards, and bound-id bookkeeping; the service stays the validation
 * authority (the editor re-validates every buffer through it).
 *
 *   tag := '<' name ' ' class="value" (' ' id)+ '>' text '</' name '>'
 *   name := gdo | gda | gdl        id := [a-z-]+-[0-9]+
 */

export type TagKind = "gdo" | "gda" | "gdl";

export const TAG_NAMES: readonly TagKind[] = ["gdo", "gda", "gdl"];

const ID_RE = /^[a-z-]+-[0-9]+$/;

export interface TextSegment {
  type: "text";
  text: string;
  /** offsets into the buffer, [start, end) */
  start: number;
  end: number;
}

export interface TagSegment {
  type: "tag";
  kind: TagKind;
  classAttr: string;
  refIds: string[];
  text: string;
  start: number;
  end: number;
  /** where the span text sits inside the buffer */
  textStart: number;
  textEnd: number;
}

export type Segment = TextSegment | TagSegment;

export type ParseResult =
  | { ok: true; segments: Segment[] }
  | { ok: false; position: number; message: string };

export function objectIdClass(objectId: string): string {
  const match = ID_RE.exec(objectId);
  if (!match) throw new Error(`malformed object id ${objectId}`);
  return objectId.slice(0, objectId.lastIndexOf("-"));
}

export function parseBuffer(buffer: string): ParseResult {
  const segments: Segment[] = [];
  let pos = 0;
  let plainStart = 0;

  const fail = (position: number, message: string): ParseResult => ({ ok: false, position, message });

  const flushPlain = (end: number) => {
    if (end > plainStart) {
      segments.push({ type: "text", text: buffer.slice(plainStart, end), start: plainStart, end });
    }
  };

  while (pos < buffer.length) {
    if (buffer[pos] !== "<") {
      pos += 1;
      continue;
    }
    const tagStart = pos;
    if (buffer.startsWith("</", pos)) return fail(tagStart, "closing tag without an open tag");
    pos += 1;
    let nameEnd = pos;
    while (nameEnd < buffer.length && /[a-z]/.test(buffer[nameEnd])) nameEnd += 1;
    const name = buffer.slice(pos, nameEnd);
    if (!TAG_NAMES.includes(name as TagKind)) return fail(pos, `unknown tag name '${name}'`);
    const kind = name as TagKind;
    pos = nameEnd;
    if (buffer[pos] !== " ") return fail(pos, "expected space after tag name");
    while (buffer[pos] === " ") pos += 1;
    if (!buffer.startsWith('class="', pos)) return fail(pos, "missing class attribute");
    pos += 'class="'.length;
    const valueStart = pos;
    while (pos < buffer.length && !'"<>'.includes(buffer[pos])) pos += 1;
    if (buffer[pos] !== '"') return fail(valueStart, "unterminated class attribute");
    const classAttr = buffer.slice(valueStart, pos);
    pos += 1;
    if (!classAttr) return fail(valueStart, "empty class attribute");

    const refIds: string[] = [];
    for (;;) {
      let spaces = 0;
      while (buffer[pos] === " ") {
        pos += 1;
        spaces += 1;
      }
      if (buffer[pos] === ">") {
        pos += 1;
        break;
      }
      if (!spaces || pos >= buffer.length) return fail(pos, "expected space-separated object ids then '>'");
      const idStart = pos;
      while (pos < buffer.length && !" ><".includes(buffer[pos])) pos += 1;
      const token = buffer.slice(idStart, pos);
      if (!ID_RE.test(token)) return fail(idStart, `invalid object id '${token}'`);
      refIds.push(token);
    }
    if (!refIds.length) return fail(pos - 1, "empty id list");

    const textStart = pos;
    for (;;) {
      if (pos >= buffer.length) return fail(tagStart, `unclosed <${kind}> tag`);
      const ch = buffer[pos];
      if (ch === "<") break;
      if (ch === ">") return fail(pos, "tag delimiter '>' inside span text");
      pos += 1;
    }
    const spanText = buffer.slice(textStart, pos);
    const closeStart = pos;
    if (!buffer.startsWith("</", pos)) return fail(closeStart, "nested tag inside span text");
    pos += 2;
    let closeNameEnd = pos;
    while (closeNameEnd < buffer.length && /[a-z]/.test(buffer[closeNameEnd])) closeNameEnd += 1;
    const closeName = buffer.slice(pos, closeNameEnd);
    if (closeName !== kind) return fail(closeStart, `mismatched closing tag </${closeName}> for <${kind}>`);
    pos = closeNameEnd;
    if (buffer[pos] !== ">") return fail(pos, "malformed closing tag");
    pos += 1;
    if (!spanText) return fail(textStart, "empty span text");

    flushPlain(tagStart);
    segments.push({
      type: "tag",
      kind,
      classAttr,
      refIds,
      text: spanText,
      start: tagStart,
      end: pos,
      textStart,
      textEnd: closeStart,
    });
    plainStart = pos;
  }
  flushPlain(buffer.length);
  return { ok: true, segments };
}

/** Distinct ids referenced by any span, across all three kinds. */
export function referencedIds(buffer: string): Set<string> {
  const parsed = parseBuffer(buffer);
  const ids = new Set<string>();
  if (!parsed.ok) return ids;
  for (const segment of parsed.segments) {
    if (segment.type === "tag") for (const id of segment.refIds) ids.add(id);
  }
  return ids;
}

export function serializeTag(kind: TagKind, classAttr: string, refIds: string[], text: string): string {
  return `<${kind} class="${classAttr}" ${refIds.join(" ")}>${text}</${kind}>`;
}
