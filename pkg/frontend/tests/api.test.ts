import { describe, expect, it } from "vitest";

import { ApiClient, ApiError, MalformedResponse } from "../src/api.js";
import { ScriptedServer, wireItem, wireJob } from "./helpers.js";

const BASE = "http://wiki.test";

describe("request shapes", () => {
  it("fetches items under /wiki/{repo}/item/{article}/{item} with X-User", async () => {
    const server = new ScriptedServer().on(
      "GET",
      "/wiki/main/item/calc/six",
      200,
      wireItem("calc#six", "def six := nat.two * nat.three;"),
    );
    const api = new ApiClient(BASE, "alice", server.fetch);
    const info = await api.itemInfo("main", "calc", "six");
    expect(info.text).toBe("def six := nat.two * nat.three;");
    expect(info.span).toEqual({ start: 0, end: 31 });
    expect(server.requests[0]?.headers["X-User"]).toBe("alice");
  });

  it("sends no X-User header for the anonymous reader", async () => {
    const server = new ScriptedServer().on("GET", "/wiki/main/article/calc", 200, "<html>", true);
    const api = new ApiClient(BASE, null, server.fetch);
    await api.articleHtml("main", "calc");
    expect(server.requests[0]?.headers).not.toHaveProperty("X-User");
  });

  it("maps dotted article names onto path segments", async () => {
    const server = new ScriptedServer()
      .on("GET", "/wiki/main/article/lab/note", 200, "<html>", true)
      .on("GET", "/wiki/main/item/lab/note/x", 200, wireItem("lab.note#x", "def x := 1;"));
    const api = new ApiClient(BASE, "alice", server.fetch);
    await api.articleHtml("main", "lab.note");
    await api.itemInfo("main", "lab.note", "x");
    expect(server.requests.map((r) => r.path)).toEqual([
      "/wiki/main/article/lab/note",
      "/wiki/main/item/lab/note/x",
    ]);
  });

  it("keeps slashes in repository names", async () => {
    const server = new ScriptedServer().on(
      "GET",
      "/wiki/user/alice/scratch/item/calc/six",
      200,
      wireItem("calc#six", "def six := 6;"),
    );
    const api = new ApiClient(BASE, "alice", server.fetch);
    await api.itemInfo("user/alice/scratch", "calc", "six");
    expect(server.requests[0]?.path).toBe("/wiki/user/alice/scratch/item/calc/six");
  });

  it("posts dry runs to /edit?dry_run=true with the wire field names", async () => {
    const server = new ScriptedServer().on("POST", "/edit?dry_run=true", 200, {
      edit_class: "proof_only",
      changed: ["calc#use"],
      affected: ["calc#use"],
    });
    const api = new ApiClient(BASE, "alice", server.fetch);
    const pred = await api.predictEdit("main", "calc", "use", "thm use : six = 6 proof eval;");
    expect(pred).toEqual({ editClass: "proof_only", changed: ["calc#use"], affected: ["calc#use"] });
    expect(server.requests[0]?.body).toEqual({
      repo: "main",
      article: "calc",
      item: "use",
      new_text: "thm use : six = 6 proof eval;",
    });
  });

  it("submits edits with a mode and returns the job id from the 202", async () => {
    const server = new ScriptedServer().on("POST", "/edit", 202, { job_id: "job-7" });
    const api = new ApiClient(BASE, "alice", server.fetch);
    const jobId = await api.submitEdit("main", "calc", "six", "def six := 6;", "full");
    expect(jobId).toBe("job-7");
    expect(server.requests[0]?.body).toEqual({
      repo: "main",
      article: "calc",
      item: "six",
      new_text: "def six := 6;",
      mode: "full",
    });
  });

  it("cancels through DELETE /jobs/{id} and lists through GET /queue", async () => {
    const server = new ScriptedServer()
      .on("DELETE", "/jobs/job-7", 200, wireJob("job-7", "cancelled"))
      .on("GET", "/queue", 200, [wireJob("job-7", "cancelled")]);
    const api = new ApiClient(BASE, "alice", server.fetch);
    expect((await api.cancelJob("job-7")).state).toBe("cancelled");
    const jobs = await api.queue();
    expect(jobs.map((j) => j.id)).toEqual(["job-7"]);
  });

  it("reads stats with a granularity query", async () => {
    const server = new ScriptedServer().on("GET", "/stats/main?granularity=file", 200, {
      items: 6,
      deps: 15,
      tdeps: 19,
      p: 63.3,
      arl: 3.17,
      mrl: 3.0,
    });
    const api = new ApiClient(BASE, null, server.fetch);
    const stats = await api.stats("main", "file");
    expect(stats.deps).toBe(15);
    expect(server.requests[0]?.path).toBe("/stats/main?granularity=file");
  });

  it("registers users and creates repositories", async () => {
    const server = new ScriptedServer()
      .on("POST", "/register", 201, { username: "dana", public_key: "pk", classes: ["@users"] })
      .on("POST", "/repos", 201, { name: "user/dana/lab", creator: "dana", head: "abc" });
    const api = new ApiClient(BASE, "dana", server.fetch);
    expect((await api.register("dana", "pk")).classes).toEqual(["@users"]);
    expect((await api.createRepo("user/dana/lab")).creator).toBe("dana");
    expect(server.requests[0]?.body).toEqual({ username: "dana", public_key: "pk" });
  });
});

describe("error handling", () => {
  it("turns {error, message} bodies into ApiError with the HTTP status", async () => {
    const server = new ScriptedServer().on("POST", "/edit", 403, {
      error: "PolicyDenied",
      message: "anonymous may not write main",
    });
    const api = new ApiClient(BASE, null, server.fetch);
    const err = await api.submitEdit("main", "calc", "six", "def six := 6;").catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(403);
    expect(err.code).toBe("PolicyDenied");
    expect(err.message).toBe("anonymous may not write main");
  });

  it("rejects 2xx bodies that miss documented fields", async () => {
    const server = new ScriptedServer().on("GET", "/jobs/j1", 200, { id: "j1" });
    const api = new ApiClient(BASE, null, server.fetch);
    await expect(api.job("j1")).rejects.toBeInstanceOf(MalformedResponse);
  });

  it("rejects job payloads whose lists hold non-strings", async () => {
    const server = new ScriptedServer().on(
      "GET",
      "/jobs/j1",
      200,
      wireJob("j1", "queued", { plan_affected: [1, 2] }),
    );
    const api = new ApiClient(BASE, null, server.fetch);
    await expect(api.job("j1")).rejects.toBeInstanceOf(MalformedResponse);
  });
});
