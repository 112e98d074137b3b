/** The delimited-edit flow end to end against a scripted server: impact
 * preview before submission, the forward-only status trail afterwards, and
 * the policy and error paths. The scripts pin the full displayed state
 * sequence (queued, running, succeeded), which live polling may legitimately
 * shorten when a state falls between two polls.
 */

import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import {
  EditorController,
  EmptyDraft,
  ItemNotFound,
  ReadOnlyEditor,
} from "../src/editor.js";
import { JobPoller } from "../src/poller.js";
import { EditorAlreadyOpen, ViewState } from "../src/state.js";
import { ScriptedServer, wireItem, wireJob } from "./helpers.js";

const BASE = "http://wiki.test";
const REPO = "user/alice/scratch";
const USE_TEXT = "thm use : six = nat.two * 3 proof by nat.add_comm;";
const USE_PROOF_EDIT = "thm use : six = nat.two * 3 proof eval;";
const SIX_TEXT = "def six := nat.two * nat.three;";
const SIX_STMT_EDIT = "def six := 3 * nat.two;";

function probeResponse(iid: string) {
  return { edit_class: "proof_only", changed: [iid], affected: [iid] };
}

function controller(server: ScriptedServer, user: string | null = "alice") {
  const api = new ApiClient(BASE, user, server.fetch);
  const view = new ViewState();
  const poller = new JobPoller(api, view, { sleep: async () => {} });
  return { view, editor: new EditorController(api, view, poller) };
}

describe("proof-only edit", () => {
  it("previews exactly one item and displays queued, running, succeeded", async () => {
    const server = new ScriptedServer()
      .on("GET", `/wiki/${REPO}/item/calc/use`, 200, wireItem("calc#use", USE_TEXT))
      .onSequence("POST", "/edit?dry_run=true", [
        { status: 200, body: probeResponse("calc#use") },
        { status: 200, body: probeResponse("calc#use") },
      ])
      .on("POST", "/edit", 202, { job_id: "job-1" })
      .onSequence("GET", "/jobs/job-1", [
        { status: 200, body: wireJob("job-1", "queued") },
        { status: 200, body: wireJob("job-1", "running") },
        { status: 200, body: wireJob("job-1", "succeeded", { recomputed: 1 }) },
      ]);
    const { view, editor } = controller(server);

    const open = await editor.open(REPO, "calc", "use");
    expect(open.draft).toBe(USE_TEXT);
    expect(open.canWrite).toBe(true);

    editor.setDraft(USE_PROOF_EDIT);
    const pred = await editor.preview();
    expect(pred.editClass).toBe("proof_only");
    expect(pred.affected).toEqual(["calc#use"]);
    expect(pred.affected.length).toBe(1);

    const { jobId, outcome } = await editor.submit();
    expect(jobId).toBe("job-1");
    expect(view.editor).toBeNull();

    const final = await outcome;
    expect(final.state).toBe("succeeded");
    expect(final.recomputed).toBe(1);
    expect(view.jobHistory("job-1")).toEqual(["queued", "running", "succeeded"]);
  });

  it("refuses to submit without a preview of the current draft", async () => {
    const server = new ScriptedServer()
      .on("GET", `/wiki/${REPO}/item/calc/use`, 200, wireItem("calc#use", USE_TEXT))
      .onSequence("POST", "/edit?dry_run=true", [
        { status: 200, body: probeResponse("calc#use") },
        { status: 200, body: probeResponse("calc#use") },
      ])
      .on("POST", "/edit", 202, { job_id: "job-2" })
      .on("GET", "/jobs/job-2", 200, wireJob("job-2", "succeeded"));
    const { view, editor } = controller(server);

    await editor.open(REPO, "calc", "use");
    editor.setDraft(USE_PROOF_EDIT);
    await editor.submit();

    const previews = server.requests.filter((r) => r.path === "/edit?dry_run=true");
    expect(previews.length).toBe(2);
    expect(previews[1]?.body).toMatchObject({ new_text: USE_PROOF_EDIT });
    const submits = server.requests.filter((r) => r.path === "/edit");
    expect(submits[0]?.body).toMatchObject({ new_text: USE_PROOF_EDIT, mode: "full" });
    expect(view.watchedJobs()).toEqual(["job-2"]);
  });
});

describe("statement edit", () => {
  it("previews the three-item closure for a statement change of six", async () => {
    const server = new ScriptedServer()
      .on("GET", `/wiki/${REPO}/item/calc/six`, 200, wireItem("calc#six", SIX_TEXT, { kind: "def" }))
      .onSequence("POST", "/edit?dry_run=true", [
        { status: 200, body: probeResponse("calc#six") },
        {
          status: 200,
          body: {
            edit_class: "statement_change",
            changed: ["calc#six"],
            affected: ["calc#six", "calc#six_is_six", "calc#use"],
          },
        },
      ]);
    const { view, editor } = controller(server);

    await editor.open(REPO, "calc", "six");
    editor.setDraft(SIX_STMT_EDIT);
    const pred = await editor.preview();
    expect(pred.editClass).toBe("statement_change");
    expect(pred.affected).toEqual(["calc#six", "calc#six_is_six", "calc#use"]);
    // the display is exactly the server's set: nothing added, nothing dropped
    expect(view.editor?.prediction).toEqual(pred);
  });
});

describe("policy and error paths", () => {
  it("opens read-only with the server's denial as the tooltip", async () => {
    const server = new ScriptedServer()
      .on("GET", "/wiki/main/item/calc/use", 200, wireItem("calc#use", USE_TEXT))
      .on("POST", "/edit?dry_run=true", 403, {
        error: "PolicyDenied",
        message: "anonymous may not write main",
      });
    const { editor } = controller(server, null);

    const open = await editor.open("main", "calc", "use");
    expect(open.canWrite).toBe(false);
    expect(open.denyReason).toBe("anonymous may not write main");
    expect(open.draft).toBe(USE_TEXT);
    await expect(editor.preview()).rejects.toBeInstanceOf(ReadOnlyEditor);
    await expect(editor.submit()).rejects.toBeInstanceOf(ReadOnlyEditor);
  });

  it("maps missing items onto ItemNotFound", async () => {
    const server = new ScriptedServer().on("GET", `/wiki/${REPO}/item/calc/nope`, 404, {
      error: "UnknownItem",
      message: "calc has no item nope",
    });
    const { editor } = controller(server);
    await expect(editor.open(REPO, "calc", "nope")).rejects.toBeInstanceOf(ItemNotFound);
  });

  it("rejects empty drafts before any request goes out", async () => {
    const server = new ScriptedServer()
      .on("GET", `/wiki/${REPO}/item/calc/use`, 200, wireItem("calc#use", USE_TEXT))
      .on("POST", "/edit?dry_run=true", 200, probeResponse("calc#use"));
    const { editor } = controller(server);
    await editor.open(REPO, "calc", "use");
    editor.setDraft("   \n");
    const before = server.requests.length;
    await expect(editor.submit()).rejects.toBeInstanceOf(EmptyDraft);
    expect(server.requests.length).toBe(before);
  });

  it("enforces one editor at a time across items", async () => {
    const server = new ScriptedServer()
      .on("GET", `/wiki/${REPO}/item/calc/use`, 200, wireItem("calc#use", USE_TEXT))
      .on("GET", `/wiki/${REPO}/item/calc/six`, 200, wireItem("calc#six", SIX_TEXT))
      .on("POST", "/edit?dry_run=true", 200, probeResponse("calc#use"));
    const { editor } = controller(server);
    await editor.open(REPO, "calc", "use");
    await expect(editor.open(REPO, "calc", "six")).rejects.toBeInstanceOf(EditorAlreadyOpen);
    editor.close();
    await expect(editor.open(REPO, "calc", "six")).resolves.toMatchObject({ item: "six" });
  });

  it("surfaces diagnostics of a failed job without touching the article", async () => {
    const diagnostics = [
      { item: "calc#use", stage: "verify", message: "proof_break: cited theorem is gone" },
    ];
    const server = new ScriptedServer()
      .on("GET", `/wiki/${REPO}/item/calc/use`, 200, wireItem("calc#use", USE_TEXT))
      .onSequence("POST", "/edit?dry_run=true", [
        { status: 200, body: probeResponse("calc#use") },
        { status: 200, body: probeResponse("calc#use") },
      ])
      .on("POST", "/edit", 202, { job_id: "job-3" })
      .onSequence("GET", "/jobs/job-3", [
        { status: 200, body: wireJob("job-3", "running") },
        { status: 200, body: wireJob("job-3", "failed", { diagnostics, detail: "verification failed" }) },
      ])
      .on("GET", `/wiki/${REPO}/item/calc/use`, 200, wireItem("calc#use", USE_TEXT));
    const { view, editor } = controller(server);

    await editor.open(REPO, "calc", "use");
    editor.setDraft("thm use : six = nat.two * 3 proof by gone;");
    const { outcome } = await editor.submit();
    const final = await outcome;
    expect(final.state).toBe("failed");
    expect(final.diagnostics).toEqual(diagnostics);
    expect(view.jobHistory("job-3")).toEqual(["running", "failed"]);

    // the item on the server is unchanged; a re-fetch shows the old text
    const api = new ApiClient(BASE, "alice", server.fetch);
    const after = await api.itemInfo(REPO, "calc", "use");
    expect(after.text).toBe(USE_TEXT);
  });
});
