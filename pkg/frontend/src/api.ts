/**
 * Thin client over the annotation service endpoints. The UI never touches
 * records directly; every read and write goes through this surface.
 */

import { Diagnostics } from "./editor.js";

export interface BoxJson {
  x: number;
  y: number;
  w: number;
  h: number;
}

export interface ObjectJson {
  object_id: string;
  class_name: string;
  box: BoxJson;
  score: number;
}

export interface FrameJson {
  frame_id: string;
  width: number;
  height: number;
  image_ref: string;
  split: string;
  objects: ObjectJson[];
}

export interface TaskJson {
  task_id: string;
  frame_id: string;
  caption_id: string;
  kind: "refine" | "rate";
  assigned_to: string;
  status: string;
}

export interface RefinementResponse {
  revision: number;
  diagnostics: Diagnostics;
  grounding: { tp: number; fp: number; fn: number; precision: number; recall: number; f1: number };
}

interface RawDiagnostics {
  syntax_errors: [number, string][];
  unknown_ids: string[];
  kind_mismatches: string[];
  unreferenced_ids: string[];
}

export class ServiceError extends Error {
  constructor(public status: number, message: string, public body?: unknown) {
    super(message);
  }
}

function toDiagnostics(raw: RawDiagnostics): Diagnostics {
  return {
    syntaxErrors: raw.syntax_errors,
    unknownIds: raw.unknown_ids,
    kindMismatches: raw.kind_mismatches,
    unreferencedIds: raw.unreferenced_ids,
  };
}

export class ServiceClient {
  constructor(private baseUrl: string, private token: string, private fetcher: typeof fetch = fetch) {}

  private async request(path: string, init: RequestInit = {}): Promise<unknown> {
    const response = await this.fetcher(`${this.baseUrl}${path}`, {
      ...init,
      headers: {
        Authorization: `Bearer ${this.token}`,
        "Content-Type": "application/json",
        ...(init.headers ?? {}),
      },
    });
    const body = await response.json().catch(() => null);
    if (!response.ok) {
      const detail =
        body && typeof body === "object" && "detail" in body
          ? String((body as { detail: unknown }).detail)
          : response.statusText;
      throw new ServiceError(response.status, detail, body);
    }
    return body;
  }

  getFrame(frameId: string): Promise<FrameJson> {
    return this.request(`/frames/${frameId}`) as Promise<FrameJson>;
  }

  imageUrl(frameId: string, box?: BoxJson): string {
    const crop = box ? `?box=${box.x},${box.y},${box.w},${box.h}` : "";
    return `${this.baseUrl}/frames/${frameId}/image${crop}`;
  }

  async nextTask(kind: "refine" | "rate"): Promise<TaskJson | null> {
    const body = (await this.request(`/tasks/next?kind=${kind}`)) as { task: TaskJson | null };
    return body.task;
  }

  async validate(frameId: string, text: string): Promise<{ valid: boolean; diagnostics: Diagnostics }> {
    const body = (await this.request(`/frames/${frameId}/validation`, {
      method: "POST",
      body: JSON.stringify({ text }),
    })) as { valid: boolean; diagnostics: RawDiagnostics };
    return { valid: body.valid, diagnostics: toDiagnostics(body.diagnostics) };
  }

  async submitRefinement(taskId: string, text: string, baseRevision: number): Promise<RefinementResponse> {
    const body = (await this.request(`/tasks/${taskId}/refinement`, {
      method: "POST",
      body: JSON.stringify({ text, base_revision: baseRevision }),
    })) as { revision: number; diagnostics: RawDiagnostics; grounding: RefinementResponse["grounding"] };
    return { revision: body.revision, diagnostics: toDiagnostics(body.diagnostics), grounding: body.grounding };
  }

  submitRating(taskId: string, criteria: number[]): Promise<unknown> {
    return this.request(`/tasks/${taskId}/rating`, {
      method: "POST",
      body: JSON.stringify({ criteria }),
    });
  }
}
