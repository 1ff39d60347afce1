/** Typed client for the post-editing service; all state flows through it. */

import type {
  PatchResult,
  ServiceError,
  SuggestResult,
  TurnPatch,
  TurnPayload,
} from "./types.js";

export class VersionConflictError extends Error {
  constructor(public detail: ServiceError) {
    super(detail.message);
    this.name = "VersionConflictError";
  }
}

export class SpanRejectedError extends Error {
  constructor(public detail: ServiceError) {
    super(detail.message);
    this.name = "SpanRejectedError";
  }
}

export class ApiError extends Error {
  constructor(public status: number, public detail: ServiceError) {
    super(detail.message);
    this.name = "ApiError";
  }
}

async function raiseFor(response: Response): Promise<never> {
  let detail: ServiceError;
  try {
    detail = (await response.json()) as ServiceError;
  } catch {
    detail = { code: "HTTP_" + response.status, message: response.statusText, location: null };
  }
  if (response.status === 409) throw new VersionConflictError(detail);
  if (response.status === 422) throw new SpanRejectedError(detail);
  throw new ApiError(response.status, detail);
}

export class ServiceClient {
  constructor(private baseUrl: string = "") {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await fetch(this.baseUrl + path, init);
    if (!response.ok) await raiseFor(response);
    return (await response.json()) as T;
  }

  nextTurn(filter: "all" | "unchecked" | "has_findings" = "all"): Promise<TurnPayload> {
    return this.request(`/api/turns/next?filter=${filter}`);
  }

  getTurn(dialogueId: string, turnId: number): Promise<TurnPayload> {
    return this.request(`/api/turns/${encodeURIComponent(dialogueId)}/${turnId}`);
  }

  putTurn(dialogueId: string, turnId: number, patch: TurnPatch): Promise<PatchResult> {
    return this.request(`/api/turns/${encodeURIComponent(dialogueId)}/${turnId}`, {
      method: "PUT",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(patch),
    });
  }

  suggestSpans(dialogueId: string, turnId: number): Promise<SuggestResult> {
    return this.request(
      `/api/turns/${encodeURIComponent(dialogueId)}/${turnId}/suggest-spans`,
      { method: "POST" },
    );
  }

  progress(): Promise<{ total: number; checked: number; flagged: number; clean: number }> {
    return this.request("/api/progress");
  }
}
