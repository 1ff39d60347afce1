/**
 * Client-side turn state: editable utterances, draft spans, and the span
 * counter.  All functions are pure (copy in, copy out) so the editor can
 * re-render from state alone and a refresh reproduces server state exactly.
 */

import type {
  AnnotationValue,
  FindingPayload,
  Side,
  SpanPayload,
  SpanSuggestion,
  TurnPayload,
} from "./types.js";

export type Provenance = "dictionary" | "neural" | "manual" | "server";

export interface DraftSpan extends SpanPayload {
  provenance: Provenance;
}

export interface ConflictState {
  message: string;
  /** the patch we failed to apply, kept for overwrite-after-reload */
  pendingPatch: { user_utterance: string; agent_utterance: string; spans: SpanPayload[] };
}

export interface TurnView {
  dialogueId: string;
  turnId: number;
  version: number;
  /** read-only snapshot of what the server last confirmed */
  sourceUser: string;
  sourceAgent: string;
  /** editable pane contents */
  userText: string;
  agentText: string;
  annotationValues: AnnotationValue[];
  drafts: DraftSpan[];
  selectedValue: number | null;
  dirty: boolean;
  findings: FindingPayload[];
  conflict: ConflictState | null;
  banner: string | null;
  spanError: string | null;
}

export interface Counter {
  expected: number;
  actual: number;
  ok: boolean;
}

export function fromPayload(payload: TurnPayload): TurnView {
  return {
    dialogueId: payload.dialogue_id,
    turnId: payload.turn_id,
    version: payload.version,
    sourceUser: payload.user_utterance,
    sourceAgent: payload.agent_utterance,
    userText: payload.user_utterance,
    agentText: payload.agent_utterance,
    annotationValues: payload.annotation_values.slice(),
    drafts: payload.spans.map((s) => ({ ...s, provenance: "server" as Provenance })),
    selectedValue: payload.annotation_values.length ? 0 : null,
    dirty: false,
    findings: payload.findings ?? [],
    conflict: null,
    banner: null,
    spanError: null,
  };
}

export function paneText(view: TurnView, side: Side): string {
  return side === "user" ? view.userText : view.agentText;
}

export function selectValue(view: TurnView, index: number | null): TurnView {
  if (index !== null && (index < 0 || index >= view.annotationValues.length)) {
    throw new RangeError(`no annotation value at index ${index}`);
  }
  return { ...view, selectedValue: index };
}

export function spanCounter(view: TurnView): Counter {
  const expected = view.annotationValues.length;
  const actual = view.drafts.length;
  return { expected, actual, ok: expected === actual };
}

function overlaps(a: { start_char: number; end_char: number; side: Side },
                  b: { start_char: number; end_char: number; side: Side }): boolean {
  return a.side === b.side && a.start_char < b.end_char && b.start_char < a.end_char;
}

export interface HighlightResult {
  view: TurnView;
  warning: string | null;
}

/**
 * Turn the current text selection into a draft span bound to the selected
 * annotation value.  The span's value is the exact pane slice — offsets are
 * never fabricated.  Overlapping an existing span is allowed but warned.
 */
export function highlightSelection(
  view: TurnView, side: Side, startChar: number, endChar: number,
): HighlightResult {
  const text = paneText(view, side);
  if (!(0 <= startChar && startChar < endChar && endChar <= text.length)) {
    throw new RangeError(`selection ${startChar}..${endChar} outside the ${side} pane`);
  }
  if (view.selectedValue === null) {
    return { view, warning: "select an annotation value first" };
  }
  const bound = view.annotationValues[view.selectedValue];
  const draft: DraftSpan = {
    domain: bound.domain,
    slot: bound.slot,
    relation: bound.relation,
    value: text.slice(startChar, endChar),
    start_char: startChar,
    end_char: endChar,
    side,
    provenance: "manual",
  };
  const warning = view.drafts.some((d) => overlaps(d, draft))
    ? "OverlapWarning: selection overlaps an existing span"
    : null;
  return {
    view: { ...view, drafts: [...view.drafts, draft], dirty: true, spanError: null },
    warning,
  };
}

export function removeDraft(view: TurnView, index: number): TurnView {
  const drafts = view.drafts.filter((_, i) => i !== index);
  return { ...view, drafts, dirty: true };
}

/**
 * Replace a pane's text.  Draft spans must always reference current editor
 * offsets, so drafts whose recorded slice no longer matches are dropped.
 */
export function editText(view: TurnView, side: Side, text: string): TurnView {
  const next = side === "user" ? { ...view, userText: text } : { ...view, agentText: text };
  const drafts = next.drafts.filter(
    (d) => d.side !== side || paneText(next, side).slice(d.start_char, d.end_char) === d.value,
  );
  return { ...next, drafts, dirty: true };
}

/** Accept one suggestion: it becomes an editable draft with its provenance. */
export function acceptSuggestion(view: TurnView, suggestion: SpanSuggestion): TurnView {
  const text = paneText(view, suggestion.side);
  if (text.slice(suggestion.start_char, suggestion.end_char) !== suggestion.text) {
    return { ...view, banner: `stale suggestion for ${suggestion.value}` };
  }
  const draft: DraftSpan = {
    domain: suggestion.domain,
    slot: suggestion.slot,
    relation: suggestion.relation,
    value: suggestion.text,
    start_char: suggestion.start_char,
    end_char: suggestion.end_char,
    side: suggestion.side,
    provenance: suggestion.provenance,
  };
  return { ...view, drafts: [...view.drafts, draft], dirty: true };
}

export function acceptAllSuggestions(view: TurnView, suggestions: SpanSuggestion[]): TurnView {
  return suggestions.reduce(acceptSuggestion, view);
}

/**
 * Echo-compare every draft against its pane slice.  Returns the problem
 * description or null; the save flow refuses to send fabricated offsets.
 */
export function verifyDrafts(view: TurnView): string | null {
  for (const d of view.drafts) {
    const slice = paneText(view, d.side).slice(d.start_char, d.end_char);
    if (slice !== d.value) {
      return `draft ${d.slot}=${JSON.stringify(d.value)} does not match the ` +
        `${d.side} pane slice ${JSON.stringify(slice)}`;
    }
  }
  return null;
}
