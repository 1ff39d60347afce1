/** Wire types for the post-editing service API. */

export type Side = "user" | "agent";

export interface SpanPayload {
  domain: string;
  slot: string;
  relation: string;
  value: string;
  start_char: number;
  end_char: number;
  side: Side;
}

export interface AnnotationValue {
  domain: string;
  slot: string;
  relation: string;
  value: string;
}

export interface FixPayload {
  kind: string;
  dialogue_id: string;
  turn_id: number;
  payload: Record<string, unknown>;
  before: unknown;
}

export interface FindingPayload {
  code: string;
  dialogue_id: string;
  turn_id: number | null;
  slot_key: [string, string, string] | null;
  message: string;
  suggested_fix: FixPayload | null;
}

export interface TurnPayload {
  dialogue_id: string;
  turn_id: number;
  user_utterance: string;
  agent_utterance: string;
  spans: SpanPayload[];
  annotation_values: AnnotationValue[];
  version: number;
  findings?: FindingPayload[];
}

export interface TurnPatch {
  base_version: number;
  user_utterance?: string;
  agent_utterance?: string;
  spans?: SpanPayload[];
}

export interface PatchResult {
  version: number;
  findings: FindingPayload[];
}

export interface SpanSuggestion {
  domain: string;
  slot: string;
  relation: string;
  value: string;
  side: Side;
  start_char: number;
  end_char: number;
  text: string;
  provenance: "dictionary" | "neural";
}

export interface SuggestResult {
  version: number;
  suggestions: SpanSuggestion[];
  failures: { value: string; reason: string }[];
}

export interface ServiceError {
  code: string;
  message: string;
  location: string | null;
}
