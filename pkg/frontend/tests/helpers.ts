/** A scripted stand-in for fetch: canned responses keyed by method and
 * path, with every request recorded so tests can assert exactly what went
 * over the wire (and that nothing was displayed that did not).
 */

import type { FetchLike } from "../src/api.js";

export interface RecordedRequest {
  method: string;
  path: string;
  headers: Record<string, string>;
  body: unknown;
}

interface Rule {
  method: string;
  path: string;
  /** Responses consumed in order; the last one repeats. */
  responses: Array<{ status: number; body: unknown; html?: boolean }>;
}

export class ScriptedServer {
  readonly requests: RecordedRequest[] = [];
  private readonly rules: Rule[] = [];

  /** Register one response (repeated if the route is hit again). */
  on(method: string, path: string, status: number, body: unknown, html = false): this {
    const rule = this.rule(method, path);
    rule.responses.push({ status, body, html });
    return this;
  }

  /** Register a sequence of JSON responses consumed one poll at a time. */
  onSequence(method: string, path: string, responses: Array<{ status: number; body: unknown }>): this {
    const rule = this.rule(method, path);
    for (const r of responses) rule.responses.push(r);
    return this;
  }

  private rule(method: string, path: string): Rule {
    let rule = this.rules.find((r) => r.method === method && r.path === path);
    if (rule === undefined) {
      rule = { method, path, responses: [] };
      this.rules.push(rule);
    }
    return rule;
  }

  fetch: FetchLike = async (url, init) => {
    const method = init?.method ?? "GET";
    const parsed = new URL(url);
    const path = parsed.pathname + parsed.search;
    const headers: Record<string, string> = {};
    for (const [k, v] of Object.entries(init?.headers ?? {})) headers[k] = v as string;
    const body = typeof init?.body === "string" ? JSON.parse(init.body) : undefined;
    this.requests.push({ method, path, headers, body });

    const rule = this.rules.find((r) => r.method === method && r.path === path);
    if (rule === undefined || rule.responses.length === 0) {
      throw new Error(`no scripted response for ${method} ${path}`);
    }
    const next = rule.responses.length > 1 ? rule.responses.shift()! : rule.responses[0]!;
    if (next.html) {
      return new Response(String(next.body), {
        status: next.status,
        headers: { "content-type": "text/html; charset=utf-8" },
      });
    }
    return new Response(JSON.stringify(next.body), {
      status: next.status,
      headers: { "content-type": "application/json" },
    });
  };
}

/** Job record in the server's wire shape, with overridable fields. */
export function wireJob(id: string, state: string, extra: Record<string, unknown> = {}): unknown {
  return {
    id,
    owner: "alice",
    kind: "edit",
    mode: "full",
    repo: "user/alice/scratch",
    state,
    detail: "",
    diagnostics: [],
    plan_changed: [],
    plan_affected: [],
    verified_items: [],
    recomputed: 0,
    commit: null,
    ...extra,
  };
}

/** Item record in the server's wire shape, with overridable fields. */
export function wireItem(item: string, text: string, extra: Record<string, unknown> = {}): unknown {
  const name = item.split("#")[1] ?? item;
  return {
    item,
    name,
    kind: "thm",
    text,
    statement: text,
    proof: null,
    status: "ok",
    deps: [],
    span: { start: 0, end: text.length },
    ...extra,
  };
}
