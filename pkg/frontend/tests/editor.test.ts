import { describe, expect, it } from "vitest";

import { EditorState, TAG_COLORS, UNBOUND_COLOR } from "../src/editor.js";
import { referencedIds } from "../src/markup.js";

describe("EditorState.bindSelection", () => {
  it("wraps a plain-text selection in the chosen tag", () => {
    const state = new EditorState("see the car today", 1);
    state.setSelection(4, 11); // "the car"
    const outcome = state.bindSelection("gdo", ["car-0"]);
    expect(outcome.ok).toBe(true);
    expect(state.buffer).toBe('see <gdo class="car" car-0>the car</gdo> today');
  });

  it("derives gdl class from the id and requires an action class for gda", () => {
    const state = new EditorState("near the walls", 1);
    state.setSelection(5, 14);
    expect(state.bindSelection("gdl", ["wall-0"]).ok).toBe(true);
    expect(state.buffer).toContain('<gdl class="wall" wall-0>the walls</gdl>');

    const action = new EditorState("he frowns", 1);
    action.setSelection(3, 9);
    expect(action.bindSelection("gda", ["person-0"]).ok).toBe(false);
    const bound = action.bindSelection("gda", ["person-0"], "frown");
    expect(bound.ok).toBe(true);
    expect(action.buffer).toBe('he <gda class="frown" person-0>frowns</gda>');
  });

  it("refuses an empty selection", () => {
    const state = new EditorState("anything", 1);
    state.setSelection(3, 3);
    const outcome = state.bindSelection("gdo", ["car-0"]);
    expect(outcome.ok).toBe(false);
  });

  it("refuses selections crossing a tag boundary", () => {
    const buffer = 'a <gdo class="car" car-0>red car</gdo> waits';
    const state = new EditorState(buffer, 1);
    state.setSelection(0, 10); // reaches into the open tag
    const outcome = state.bindSelection("gdo", ["car-0"]);
    expect(outcome.ok).toBe(false);
    if (!outcome.ok) expect(outcome.reason).toContain("crosses");
    expect(state.buffer).toBe(buffer); // untouched
  });

  it("refuses selections inside an existing span", () => {
    const buffer = 'a <gdo class="car" car-0>red car</gdo> waits';
    const state = new EditorState(buffer, 1);
    const inside = buffer.indexOf("red car");
    state.setSelection(inside, inside + 3);
    expect(state.bindSelection("gdo", ["car-1"]).ok).toBe(false);
  });
});

describe("bind/unbind round trip", () => {
  it("restores the buffer byte-for-byte", () => {
    const original = "the tall man waits by the gate.";
    const state = new EditorState(original, 1);
    state.setSelection(4, 12); // "tall man"
    expect(state.bindSelection("gdo", ["person-0"]).ok).toBe(true);
    const span = state.spanAt(state.buffer.indexOf("<gdo"));
    expect(span).not.toBeNull();
    expect(state.unbindSpan(span!).ok).toBe(true);
    expect(state.buffer).toBe(original);
  });

  it("keeps boundIds equal to referencedIds after every edit", () => {
    const state = new EditorState("one two three four five", 1);
    const check = () =>
      expect(Array.from(state.boundIds()).sort()).toEqual(
        Array.from(referencedIds(state.buffer)).sort(),
      );
    check();
    state.setSelection(0, 3);
    state.bindSelection("gdo", ["car-0"]);
    check();
    state.setSelection(state.buffer.indexOf("three"), state.buffer.indexOf("three") + 5);
    state.bindSelection("gdl", ["road-0", "road-1"]);
    check();
    const span = state.spanAt(state.buffer.indexOf("<gdo"));
    state.unbindSpan(span!);
    check();
    expect(state.boundIds()).toEqual(new Set(["road-0", "road-1"]));
  });
});

describe("colors", () => {
  it("colors ids by the kind of the span binding them", () => {
    const state = new EditorState(
      '<gdo class="car" car-0>a car</gdo> <gda class="run" person-0>runs</gda> ' +
        '<gdl class="road" road-0>the road</gdl>',
      1,
    );
    expect(state.colorFor("car-0")).toBe(TAG_COLORS.gdo);
    expect(state.colorFor("person-0")).toBe(TAG_COLORS.gda);
    expect(state.colorFor("road-0")).toBe(TAG_COLORS.gdl);
    expect(state.colorFor("sky-0")).toBe(UNBOUND_COLOR);
  });

  it("objects are blue, actions red, locations green", () => {
    expect(TAG_COLORS.gdo).toBe("#2563eb");
    expect(TAG_COLORS.gda).toBe("#dc2626");
    expect(TAG_COLORS.gdl).toBe("#16a34a");
  });
});

describe("invalid buffers", () => {
  it("stay editable but flagged, with binding blocked", () => {
    const state = new EditorState("broken <gdo half", 1);
    expect(state.parseable).toBe(false);
    expect(state.segments).toBeNull();
    state.setSelection(0, 6);
    const outcome = state.bindSelection("gdo", ["car-0"]);
    expect(outcome.ok).toBe(false);
  });
});
