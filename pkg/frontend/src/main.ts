/** Entry point: mount the editor against the service that served this page. */

import { ServiceClient } from "./api.js";
import { TurnEditor } from "./editor.js";

export function mount(root: HTMLElement, baseUrl = ""): TurnEditor {
  const editor = new TurnEditor(root, new ServiceClient(baseUrl));
  void editor.loadNext("all");
  return editor;
}

declare global {
  interface Window {
    todkitEditor?: TurnEditor;
  }
}

if (typeof document !== "undefined") {
  const root = document.getElementById("app");
  if (root) {
    window.todkitEditor = mount(root);
  }
}
