/**
 * Save flow under optimistic concurrency.
 *
 * A save sends the last-known version; a 409 surfaces a conflict state with
 * two resolutions (reload and discard, or reload then overwrite with the
 * local edits).  Span rejections and network failures surface as inline
 * error / retryable banner without losing local state.
 */

import { ServiceClient, SpanRejectedError, VersionConflictError } from "./api.js";
import { TurnView, fromPayload, verifyDrafts } from "./model.js";
import type { SpanPayload } from "./types.js";

function patchSpans(view: TurnView): SpanPayload[] {
  return view.drafts.map(({ provenance: _provenance, ...span }) => span);
}

export async function save(view: TurnView, client: ServiceClient): Promise<TurnView> {
  const mismatch = verifyDrafts(view);
  if (mismatch !== null) {
    return { ...view, spanError: mismatch };
  }
  const patch = {
    base_version: view.version,
    user_utterance: view.userText,
    agent_utterance: view.agentText,
    spans: patchSpans(view),
  };
  try {
    const result = await client.putTurn(view.dialogueId, view.turnId, patch);
    return {
      ...view,
      version: result.version,
      findings: result.findings,
      sourceUser: view.userText,
      sourceAgent: view.agentText,
      dirty: false,
      conflict: null,
      banner: null,
      spanError: null,
    };
  } catch (error) {
    if (error instanceof VersionConflictError) {
      return {
        ...view,
        conflict: {
          message: error.detail.message,
          pendingPatch: {
            user_utterance: patch.user_utterance,
            agent_utterance: patch.agent_utterance,
            spans: patch.spans,
          },
        },
      };
    }
    if (error instanceof SpanRejectedError) {
      return { ...view, spanError: error.detail.message };
    }
    return { ...view, banner: `save failed, retry: ${(error as Error).message}` };
  }
}

/** Conflict resolution: drop local edits and show the server's turn. */
export async function resolveConflictReload(
  view: TurnView, client: ServiceClient,
): Promise<TurnView> {
  const payload = await client.getTurn(view.dialogueId, view.turnId);
  return fromPayload(payload);
}

/**
 * Conflict resolution: fetch the current version, then re-apply the local
 * edits on top of it (overwrite-after-reload; never a blind overwrite).
 */
export async function resolveConflictOverwrite(
  view: TurnView, client: ServiceClient,
): Promise<TurnView> {
  if (view.conflict === null) return view;
  const server = await client.getTurn(view.dialogueId, view.turnId);
  const retried = await client.putTurn(view.dialogueId, view.turnId, {
    base_version: server.version,
    ...view.conflict.pendingPatch,
  });
  return {
    ...view,
    version: retried.version,
    findings: retried.findings,
    sourceUser: view.userText,
    sourceAgent: view.agentText,
    dirty: false,
    conflict: null,
    banner: null,
    spanError: null,
  };
}
