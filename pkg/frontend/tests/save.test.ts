import { beforeEach, describe, expect, it } from "vitest";

import { ServiceClient } from "../src/api.js";
import { editText, fromPayload, highlightSelection, selectValue } from "../src/model.js";
import { resolveConflictOverwrite, resolveConflictReload, save } from "../src/save.js";
import { MockService, fixtureTurn } from "./mockService.js";

let service: MockService;
let client: ServiceClient;

beforeEach(() => {
  service = new MockService();
  service.addTurn(fixtureTurn());
  service.install();
  client = new ServiceClient();
});

async function freshView() {
  return fromPayload(await client.getTurn("attraction-demo-001", 0));
}

describe("save", () => {
  it("clean save bumps the version and refreshes findings", async () => {
    let v = await freshView();
    expect(v.findings.map((f) => f.code)).toEqual(["SPAN_COUNT_MISMATCH"]);
    v = selectValue(v, 2);
    v = highlightSelection(v, "agent", 14, 29).view;
    v = await save(v, client);
    expect(v.version).toBe(1);
    expect(v.dirty).toBe(false);
    expect(v.findings).toEqual([]);  // span counts now match
  });

  it("a stale version surfaces a conflict, and the server is not overwritten", async () => {
    const a = await freshView();
    const b = await freshView();

    const savedA = await save(editText(a, "agent", "How about Guanqian Street?"), client);
    expect(savedA.version).toBe(1);

    const savedB = await save(editText(b, "agent", "CLOBBER"), client);
    expect(savedB.conflict).not.toBeNull();
    expect(savedB.version).toBe(0); // unchanged locally

    const onServer = await client.getTurn("attraction-demo-001", 0);
    expect(onServer.agent_utterance).toBe("How about Guanqian Street?");
  });

  it("conflict resolution: reload discards local edits", async () => {
    const a = await freshView();
    const b = await freshView();
    await save(editText(a, "agent", "How about Guanqian Street?"), client);
    const conflicted = await save(editText(b, "agent", "CLOBBER"), client);

    const reloaded = await resolveConflictReload(conflicted, client);
    expect(reloaded.agentText).toBe("How about Guanqian Street?");
    expect(reloaded.version).toBe(1);
    expect(reloaded.conflict).toBeNull();
  });

  it("conflict resolution: overwrite-after-reload re-applies local edits", async () => {
    const a = await freshView();
    const b = await freshView();
    await save(editText(a, "user", "Edited by A."), client);
    // B edits the agent side only; after overwrite both edits should hold
    const bEdited = editText(b, "agent", "Edited by B.");
    const conflicted = await save(bEdited, client);
    expect(conflicted.conflict).not.toBeNull();

    const resolved = await resolveConflictOverwrite(conflicted, client);
    expect(resolved.conflict).toBeNull();
    expect(resolved.version).toBe(2);
    const onServer = await client.getTurn("attraction-demo-001", 0);
    expect(onServer.agent_utterance).toBe("Edited by B.");
  });

  it("the service rejects a span that does not match its slice with 422", async () => {
    const { SpanRejectedError } = await import("../src/api.js");
    await expect(client.putTurn("attraction-demo-001", 0, {
      base_version: 0,
      spans: [{ domain: "attraction", slot: "consumption", relation: "equal_to",
                value: "mid", start_char: 0, end_char: 3, side: "user" }],
    })).rejects.toBeInstanceOf(SpanRejectedError);
  });

  it("save maps a span rejection to an inline error on the view", async () => {
    const { SpanRejectedError } = await import("../src/api.js");
    const v = editText(await freshView(), "agent", "edited");
    const stub = {
      putTurn: async () => {
        throw new SpanRejectedError({ code: "SpanInvariantViolation",
                                      message: "span name does not match", location: null });
      },
    } as unknown as ServiceClient;
    const saved = await save(v, stub);
    expect(saved.spanError).toMatch(/does not match/);
    expect(saved.version).toBe(0);
  });

  it("the echo-compare refuses to send fabricated offsets", async () => {
    const v = await freshView();
    const fabricated = { ...v, drafts: [{ ...v.drafts[0], value: "not the slice" }] };
    const saved = await save(fabricated, client);
    expect(saved.spanError).toMatch(/does not match/);
    expect(service.receivedPatches.length).toBe(0); // nothing was sent
  });

  it("network failures surface as a retryable banner", async () => {
    const v = editText(await freshView(), "agent", "retry me");
    service.failNextRequest = true;
    const failed = await save(v, client);
    expect(failed.banner).toMatch(/retry/i);
    const retried = await save(failed, client);
    expect(retried.banner).toBeNull();
    expect(retried.version).toBe(1);
  });
});
