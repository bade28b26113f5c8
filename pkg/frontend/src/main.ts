/**
 * DOM wiring for the annotation views.
 *
 * Left: the frame image with color-coded box overlays. Right: the caption
 * editor with tag-aware highlighting, click-to-ground binding, a diagnostics
 * panel, and (for rate tasks) the five-criterion rating form. All writes go
 * through the service client; the page holds no record state of its own.
 */

import { FrameJson, ServiceClient, ServiceError } from "./api.js";
import { EditorState, TAG_COLORS, UNBOUND_COLOR } from "./editor.js";
import { TagKind } from "./markup.js";
import { CRITERIA_LABELS, RATING_CRITERIA, RatingFormState } from "./rating.js";

export interface EditorCallbacks {
  /** async service validation; feeds the diagnostics panel */
  validate?: (text: string) => Promise<void>;
  /** submit the refined caption */
  submit?: (text: string, baseRevision: number) => Promise<void>;
}

export function mountEditor(
  container: HTMLElement,
  state: EditorState,
  callbacks: EditorCallbacks = {},
): { refresh: () => void } {
  container.innerHTML = `
    <div class="editor">
      <textarea id="caption-input" spellcheck="false" rows="8"></textarea>
      <div class="toolbar">
        <select id="tag-kind">
          <option value="gdo">object (gdo)</option>
          <option value="gda">action (gda)</option>
          <option value="gdl">location (gdl)</option>
        </select>
        <select id="object-ids" multiple size="4"></select>
        <input id="action-class" placeholder="action class (gda)" />
        <button id="bind-button" type="button">bind selection</button>
        <span id="bind-error" class="error" role="alert"></span>
      </div>
      <div id="preview" aria-label="caption preview"></div>
      <div id="bound-ids" aria-label="bound ids"></div>
      <div id="diagnostics"></div>
      <div id="service-banner" hidden>validation service unreachable; edits continue locally</div>
      <button id="save-button" type="button">save refinement</button>
    </div>`;

  const input = container.querySelector("#caption-input") as HTMLTextAreaElement;
  const kindSelect = container.querySelector("#tag-kind") as HTMLSelectElement;
  const idSelect = container.querySelector("#object-ids") as HTMLSelectElement;
  const actionClass = container.querySelector("#action-class") as HTMLInputElement;
  const bindButton = container.querySelector("#bind-button") as HTMLButtonElement;
  const bindError = container.querySelector("#bind-error") as HTMLElement;
  const saveButton = container.querySelector("#save-button") as HTMLButtonElement;

  input.value = state.buffer;

  const syncSelection = () => {
    state.setSelection(input.selectionStart ?? 0, input.selectionEnd ?? 0);
    state.pendingKind = kindSelect.value as TagKind;
  };

  const refresh = () => {
    if (input.value !== state.buffer) input.value = state.buffer;
    renderPreview(container.querySelector("#preview") as HTMLElement, state, (span) => {
      const outcome = state.unbindSpan(span);
      if (outcome.ok) afterEdit();
    });
    renderBoundIds(container.querySelector("#bound-ids") as HTMLElement, state);
    renderDiagnostics(container.querySelector("#diagnostics") as HTMLElement, state);
    const banner = container.querySelector("#service-banner") as HTMLElement;
    banner.hidden = !state.serviceUnreachable;
  };

  const afterEdit = () => {
    refresh();
    if (callbacks.validate) void callbacks.validate(state.buffer);
  };

  input.addEventListener("input", () => {
    state.buffer = input.value;
    state.dirty = true;
    afterEdit();
  });
  input.addEventListener("select", syncSelection);
  input.addEventListener("keyup", syncSelection);
  input.addEventListener("mouseup", syncSelection);

  bindButton.addEventListener("click", () => {
    syncSelection();
    const kind = kindSelect.value as TagKind;
    const ids = Array.from(idSelect.options)
      .filter((o) => o.selected)
      .map((o) => o.value);
    const outcome = state.bindSelection(kind, ids, actionClass.value || undefined);
    bindError.textContent = outcome.ok ? "" : outcome.reason;
    if (outcome.ok) afterEdit();
  });

  saveButton.addEventListener("click", () => {
    if (callbacks.submit) void callbacks.submit(state.buffer, state.baseRevision);
  });

  refresh();
  return { refresh };
}

export function setObjectChoices(container: HTMLElement, frame: FrameJson): void {
  const idSelect = container.querySelector("#object-ids") as HTMLSelectElement;
  idSelect.innerHTML = "";
  for (const object of frame.objects) {
    const option = document.createElement("option");
    option.value = object.object_id;
    option.textContent = object.object_id;
    idSelect.appendChild(option);
  }
}

export function renderPreview(
  target: HTMLElement,
  state: EditorState,
  onSpanClick: (span: import("./markup.js").TagSegment) => void,
): void {
  target.innerHTML = "";
  const segments = state.segments;
  if (!segments) {
    const flag = document.createElement("span");
    flag.className = "invalid";
    flag.textContent = state.buffer;
    target.appendChild(flag);
    target.dataset.state = "invalid";
    return;
  }
  target.dataset.state = "valid";
  for (const segment of segments) {
    if (segment.type === "text") {
      target.appendChild(document.createTextNode(segment.text));
    } else {
      const span = document.createElement("span");
      span.className = `tag tag-${segment.kind}`;
      span.style.color = TAG_COLORS[segment.kind];
      span.title = `${segment.kind} -> ${segment.refIds.join(", ")} (click to unbind)`;
      span.dataset.refIds = segment.refIds.join(" ");
      span.textContent = segment.text;
      span.addEventListener("click", () => onSpanClick(segment));
      target.appendChild(span);
    }
  }
}

export function renderBoundIds(target: HTMLElement, state: EditorState): void {
  target.innerHTML = "";
  for (const id of Array.from(state.boundIds()).sort()) {
    const chip = document.createElement("span");
    chip.className = "chip";
    chip.dataset.objectId = id;
    chip.style.borderColor = state.colorFor(id);
    chip.textContent = id;
    target.appendChild(chip);
  }
}

export function renderDiagnostics(target: HTMLElement, state: EditorState): void {
  target.innerHTML = "";
  const diagnostics = state.diagnostics;
  if (!diagnostics) return;
  const add = (cls: string, text: string) => {
    const line = document.createElement("div");
    line.className = cls;
    line.textContent = text;
    target.appendChild(line);
  };
  for (const [position, message] of diagnostics.syntaxErrors) {
    add("diag-syntax", `syntax error at ${position}: ${message}`);
  }
  for (const id of diagnostics.unknownIds) add("diag-unknown", `unknown object id: ${id}`);
  for (const reason of diagnostics.kindMismatches) add("diag-mismatch", reason);
  for (const id of diagnostics.unreferencedIds) add("diag-missing", `detected but unreferenced: ${id}`);
}

/** Box overlays: one absolutely-positioned outline per object, colored by
 * the kind of the tag binding it (gray when unbound, pulsing when the last
 * validation flagged it as missing from the caption). */
export function renderOverlay(
  layer: HTMLElement,
  frame: FrameJson,
  state: EditorState,
  scale = 1,
): void {
  layer.innerHTML = "";
  const flagged = new Set(state.diagnostics?.unreferencedIds ?? []);
  for (const object of frame.objects) {
    const box = document.createElement("div");
    box.className = "object-box" + (flagged.has(object.object_id) ? " flash" : "");
    const color = state.colorFor(object.object_id);
    box.style.position = "absolute";
    box.style.left = `${object.box.x * scale}px`;
    box.style.top = `${object.box.y * scale}px`;
    box.style.width = `${object.box.w * scale}px`;
    box.style.height = `${object.box.h * scale}px`;
    box.style.border = `2px solid ${color}`;
    box.dataset.objectId = object.object_id;
    box.dataset.bound = color === UNBOUND_COLOR ? "no" : "yes";
    const label = document.createElement("span");
    label.className = "object-label";
    label.style.background = color;
    label.textContent = object.object_id;
    box.appendChild(label);
    layer.appendChild(box);
  }
}

export function mountRatingForm(
  container: HTMLElement,
  form: RatingFormState,
  onSubmit: (criteria: number[]) => Promise<void> | void,
): void {
  container.innerHTML = `<form id="rating-form"></form>`;
  const root = container.querySelector("#rating-form") as HTMLFormElement;
  RATING_CRITERIA.forEach((criterion, index) => {
    const row = document.createElement("div");
    row.className = "rating-row";
    const label = document.createElement("label");
    label.textContent = CRITERIA_LABELS[criterion];
    row.appendChild(label);
    for (let value = 1; value <= 5; value += 1) {
      const radio = document.createElement("input");
      radio.type = "radio";
      radio.name = `criterion-${index}`;
      radio.value = String(value);
      radio.addEventListener("change", () => {
        form.setCriterion(index, value);
        submit.disabled = !form.submitEnabled;
      });
      row.appendChild(radio);
    }
    root.appendChild(row);
  });
  const submit = document.createElement("button");
  submit.id = "rating-submit";
  submit.type = "button";
  submit.textContent = "submit rating";
  submit.disabled = true;
  submit.addEventListener("click", () => {
    if (!form.submitEnabled) return;
    void onSubmit(form.payload().criteria);
  });
  root.appendChild(submit);
}

/** Full-page bootstrap; runs only in a real browser with an #app element. */
export async function bootstrap(): Promise<void> {
  const app = document.getElementById("app");
  if (!app) return;
  const params = new URLSearchParams(window.location.search);
  const base = params.get("service") ?? "";
  const token = params.get("token") ?? "";
  const kind = (params.get("kind") ?? "refine") as "refine" | "rate";
  const client = new ServiceClient(base, token);

  const task = await client.nextTask(kind);
  if (!task) {
    app.textContent = "no open tasks - the pool is exhausted";
    return;
  }
  const frame = await client.getFrame(task.frame_id);

  app.innerHTML = `
    <div class="layout">
      <div class="pane" id="image-pane" style="position: relative">
        <img id="frame-image" alt="frame" />
        <div id="overlay" style="position:absolute; inset:0"></div>
      </div>
      <div class="pane" id="work-pane"></div>
    </div>`;
  const image = document.getElementById("frame-image") as HTMLImageElement;
  image.src = client.imageUrl(frame.frame_id);
  const overlay = document.getElementById("overlay") as HTMLElement;
  const workPane = document.getElementById("work-pane") as HTMLElement;

  const state = new EditorState("", 1);
  const redraw = () => renderOverlay(overlay, frame, state);

  if (kind === "refine") {
    const editor = mountEditor(workPane, state, {
      validate: async (text) => {
        try {
          const result = await client.validate(frame.frame_id, text);
          state.applyDiagnostics(result.diagnostics, false);
        } catch (err) {
          if (err instanceof ServiceError) state.applyDiagnostics(null, false);
          else state.applyDiagnostics(state.diagnostics, true); // network: non-blocking banner
        }
        editor.refresh();
        redraw();
      },
      submit: async (text, baseRevision) => {
        const response = await client.submitRefinement(task.task_id, text, baseRevision);
        state.baseRevision = response.revision;
        state.dirty = false;
        state.applyDiagnostics(response.diagnostics, false);
        editor.refresh();
        redraw();
      },
    });
    setObjectChoices(workPane, frame);
  } else {
    const form = new RatingFormState();
    mountRatingForm(workPane, form, async (criteria) => {
      await client.submitRating(task.task_id, criteria);
      workPane.textContent = "rating stored - reload for the next task";
    });
  }
  redraw();
}

if (typeof document !== "undefined" && document.readyState !== "loading") {
  void bootstrap();
} else if (typeof document !== "undefined") {
  document.addEventListener("DOMContentLoaded", () => void bootstrap());
}
