/**
 * DOM editor for one turn: a read-only pane with the last confirmed text, an
 * editable pane per side, span highlighting by text selection, a span-count
 * indicator, alignment suggestions, findings, and a conflict dialog.
 */

import { ServiceClient } from "./api.js";
import {
  TurnView,
  editText,
  fromPayload,
  highlightSelection,
  paneText,
  removeDraft,
  selectValue,
  acceptAllSuggestions,
  spanCounter,
} from "./model.js";
import { resolveConflictOverwrite, resolveConflictReload, save } from "./save.js";
import type { Side, SpanSuggestion } from "./types.js";

export class TurnEditor {
  view: TurnView | null = null;
  suggestions: SpanSuggestion[] = [];
  warning: string | null = null;

  constructor(private root: HTMLElement, private client: ServiceClient) {}

  private get doc(): Document {
    return this.root.ownerDocument;
  }

  async loadNext(filter: "all" | "unchecked" | "has_findings" = "all"): Promise<void> {
    this.view = fromPayload(await this.client.nextTurn(filter));
    this.suggestions = [];
    this.warning = null;
    this.render();
  }

  async load(dialogueId: string, turnId: number): Promise<void> {
    this.view = fromPayload(await this.client.getTurn(dialogueId, turnId));
    this.suggestions = [];
    this.warning = null;
    this.render();
  }

  async fetchSuggestions(): Promise<void> {
    if (!this.view) return;
    const result = await this.client.suggestSpans(this.view.dialogueId, this.view.turnId);
    this.suggestions = result.suggestions;
    if (result.failures.length) {
      this.warning = `${result.failures.length} value(s) could not be aligned`;
    }
    this.render();
  }

  acceptSuggestions(): void {
    if (!this.view || !this.suggestions.length) return;
    this.view = acceptAllSuggestions(this.view, this.suggestions);
    this.suggestions = [];
    this.render();
  }

  async save(): Promise<void> {
    if (!this.view) return;
    this.view = await save(this.view, this.client);
    this.render();
  }

  async resolveConflict(overwrite: boolean): Promise<void> {
    if (!this.view) return;
    this.view = overwrite
      ? await resolveConflictOverwrite(this.view, this.client)
      : await resolveConflictReload(this.view, this.client);
    this.render();
  }

  /**
   * Turn the current browser selection inside an editable pane into a draft
   * span.  The offsets come straight from the selection's range within the
   * pane's single text node, so the sent span always equals the selection.
   */
  highlightFromSelection(): void {
    if (!this.view) return;
    const selection = this.doc.defaultView?.getSelection();
    if (!selection || selection.rangeCount === 0) return;
    const range = selection.getRangeAt(0);
    if (range.collapsed) return;
    const pane = this.paneFor(range.startContainer);
    if (!pane || pane !== this.paneFor(range.endContainer)) {
      this.warning = "selection must stay inside one utterance pane";
      this.render();
      return;
    }
    const side = pane.dataset.side as Side;
    const result = highlightSelection(this.view, side, range.startOffset, range.endOffset);
    this.view = result.view;
    this.warning = result.warning;
    this.render();
  }

  private paneFor(node: Node): HTMLElement | null {
    let current: Node | null = node;
    while (current) {
      if (current instanceof HTMLElement && current.classList.contains("pane-editable")) {
        return current;
      }
      current = current.parentNode;
    }
    return null;
  }

  render(): void {
    const doc = this.doc;
    this.root.textContent = "";
    if (!this.view) return;
    const view = this.view;

    const header = doc.createElement("div");
    header.className = "header";
    header.textContent =
      `${view.dialogueId} / turn ${view.turnId} (version ${view.version})` +
      (view.dirty ? " *" : "");
    this.root.appendChild(header);

    if (view.banner) {
      const banner = doc.createElement("div");
      banner.className = "banner";
      banner.textContent = view.banner;
      const retry = doc.createElement("button");
      retry.className = "retry";
      retry.textContent = "Retry";
      retry.addEventListener("click", () => void this.save());
      banner.appendChild(retry);
      this.root.appendChild(banner);
    }

    for (const side of ["user", "agent"] as Side[]) {
      const row = doc.createElement("div");
      row.className = "pane-row";

      const source = doc.createElement("div");
      source.className = "pane-source";
      source.textContent = side === "user" ? view.sourceUser : view.sourceAgent;
      row.appendChild(source);

      const editable = doc.createElement("div");
      editable.className = "pane-editable";
      editable.dataset.side = side;
      editable.contentEditable = "true";
      editable.appendChild(doc.createTextNode(paneText(view, side)));
      editable.addEventListener("blur", () => {
        const text = editable.textContent ?? "";
        if (this.view && text !== paneText(this.view, side)) {
          this.view = editText(this.view, side, text);
          this.render();
        }
      });
      row.appendChild(editable);
      this.root.appendChild(row);
    }

    const values = doc.createElement("ul");
    values.className = "values";
    view.annotationValues.forEach((value, i) => {
      const item = doc.createElement("li");
      item.textContent = `${value.slot} = ${value.value}`;
      if (i === view.selectedValue) item.classList.add("selected");
      item.addEventListener("click", () => {
        if (this.view) {
          this.view = selectValue(this.view, i);
          this.render();
        }
      });
      values.appendChild(item);
    });
    this.root.appendChild(values);

    const counter = spanCounter(view);
    const indicator = doc.createElement("div");
    indicator.className = `counter ${counter.ok ? "green" : "red"}`;
    indicator.textContent = `${counter.actual}/${counter.expected} spans`;
    this.root.appendChild(indicator);

    const drafts = doc.createElement("ul");
    drafts.className = "drafts";
    view.drafts.forEach((draft, i) => {
      const item = doc.createElement("li");
      item.textContent = `${draft.slot}: "${draft.value}" ` +
        `[${draft.start_char}..${draft.end_char} ${draft.side}]`;
      const badge = doc.createElement("span");
      badge.className = `badge badge-${draft.provenance}`;
      badge.textContent = draft.provenance;
      item.appendChild(badge);
      const remove = doc.createElement("button");
      remove.textContent = "x";
      remove.addEventListener("click", () => {
        if (this.view) {
          this.view = removeDraft(this.view, i);
          this.render();
        }
      });
      item.appendChild(remove);
      drafts.appendChild(item);
    });
    this.root.appendChild(drafts);

    if (view.spanError) {
      const error = doc.createElement("div");
      error.className = "span-error";
      error.textContent = view.spanError;
      this.root.appendChild(error);
    }

    if (this.warning) {
      const badge = doc.createElement("div");
      badge.className = "warning";
      badge.textContent = this.warning;
      this.root.appendChild(badge);
    }

    const findings = doc.createElement("ul");
    findings.className = "findings";
    for (const finding of view.findings) {
      const item = doc.createElement("li");
      item.textContent = `${finding.code}: ${finding.message}`;
      findings.appendChild(item);
    }
    this.root.appendChild(findings);

    const toolbar = doc.createElement("div");
    toolbar.className = "toolbar";
    const highlight = doc.createElement("button");
    highlight.className = "highlight";
    highlight.textContent = "Highlight selection";
    highlight.addEventListener("click", () => this.highlightFromSelection());
    toolbar.appendChild(highlight);

    const suggest = doc.createElement("button");
    suggest.className = "suggest";
    suggest.textContent = "Suggest spans";
    suggest.addEventListener("click", () => void this.fetchSuggestions());
    toolbar.appendChild(suggest);

    const accept = doc.createElement("button");
    accept.className = "accept";
    accept.textContent = `Accept ${this.suggestions.length} suggestion(s)`;
    accept.disabled = this.suggestions.length === 0;
    accept.addEventListener("click", () => this.acceptSuggestions());
    toolbar.appendChild(accept);

    const saveButton = doc.createElement("button");
    saveButton.className = "save";
    saveButton.textContent = "Save";
    saveButton.disabled = !view.dirty;
    saveButton.addEventListener("click", () => void this.save());
    toolbar.appendChild(saveButton);

    const next = doc.createElement("button");
    next.className = "next";
    next.textContent = "Next";
    next.addEventListener("click", () => void this.loadNext());
    toolbar.appendChild(next);
    this.root.appendChild(toolbar);

    if (view.conflict) {
      const dialog = doc.createElement("div");
      dialog.className = "conflict-dialog";
      const message = doc.createElement("p");
      message.textContent = `Version conflict: ${view.conflict.message}`;
      dialog.appendChild(message);
      const reload = doc.createElement("button");
      reload.className = "conflict-reload";
      reload.textContent = "Reload (discard my edits)";
      reload.addEventListener("click", () => void this.resolveConflict(false));
      dialog.appendChild(reload);
      const overwrite = doc.createElement("button");
      overwrite.className = "conflict-overwrite";
      overwrite.textContent = "Reload then apply my edits";
      overwrite.addEventListener("click", () => void this.resolveConflict(true));
      dialog.appendChild(overwrite);
      this.root.appendChild(dialog);
    }
  }
}
