/** Typed client for the wiki server's HTTP API.
 *
 * Every piece of data the UI displays comes through this module; nothing
 * downstream computes dependency sets, statuses or counts on its own.
 * Requests authenticate with the X-User header; a null user is the
 * anonymous reader.
 */

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

/** Error reported by the server as an {error, message} JSON body. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

/** A 2xx response whose body does not match the documented shape. */
export class MalformedResponse extends Error {
  constructor(message: string) {
    super(message);
    this.name = "MalformedResponse";
  }
}

export interface SourceSpan {
  start: number;
  end: number;
}

export interface ItemInfo {
  item: string;
  name: string;
  kind: string;
  /** Exact source span of the item, suitable for pre-filling an editor. */
  text: string;
  statement: string;
  proof: string | null;
  status: string;
  deps: string[];
  span: SourceSpan;
}

export interface EditPrediction {
  editClass: string;
  changed: string[];
  affected: string[];
}

export interface JobDiagnostic {
  item: string;
  stage: string;
  message: string;
}

export interface JobInfo {
  id: string;
  owner: string;
  kind: string;
  mode: string;
  repo: string;
  state: string;
  detail: string;
  diagnostics: JobDiagnostic[];
  planChanged: string[];
  planAffected: string[];
  verifiedItems: string[];
  recomputed: number;
  commit: string | null;
}

export interface StatsInfo {
  items: number;
  deps: number;
  tdeps: number;
  p: number;
  arl: number;
  mrl: number;
}

export interface UserInfo {
  username: string;
  classes: string[];
}

export interface RepoInfo {
  name: string;
  creator: string;
  head: string;
}

type Json = Record<string, unknown>;

function asRecord(value: unknown, what: string): Json {
  if (typeof value !== "object" || value === null || Array.isArray(value)) {
    throw new MalformedResponse(`${what}: expected an object`);
  }
  return value as Json;
}

function str(obj: Json, field: string): string {
  const v = obj[field];
  if (typeof v !== "string") {
    throw new MalformedResponse(`field ${field}: expected a string`);
  }
  return v;
}

function num(obj: Json, field: string): number {
  const v = obj[field];
  if (typeof v !== "number") {
    throw new MalformedResponse(`field ${field}: expected a number`);
  }
  return v;
}

function strOrNull(obj: Json, field: string): string | null {
  const v = obj[field];
  if (v === null || v === undefined) return null;
  if (typeof v !== "string") {
    throw new MalformedResponse(`field ${field}: expected a string or null`);
  }
  return v;
}

function strList(obj: Json, field: string): string[] {
  const v = obj[field];
  if (!Array.isArray(v) || v.some((x) => typeof x !== "string")) {
    throw new MalformedResponse(`field ${field}: expected a list of strings`);
  }
  return v as string[];
}

/** Dotted article name to URL path segments: "lab.note" -> "lab/note". */
function articlePath(article: string): string {
  return article.split(".").join("/");
}

function parseItemInfo(body: unknown): ItemInfo {
  const o = asRecord(body, "item info");
  const span = asRecord(o["span"], "span");
  return {
    item: str(o, "item"),
    name: str(o, "name"),
    kind: str(o, "kind"),
    text: str(o, "text"),
    statement: str(o, "statement"),
    proof: strOrNull(o, "proof"),
    status: str(o, "status"),
    deps: strList(o, "deps"),
    span: { start: num(span, "start"), end: num(span, "end") },
  };
}

function parseJobInfo(body: unknown): JobInfo {
  const o = asRecord(body, "job");
  const diags: JobDiagnostic[] = [];
  const raw = o["diagnostics"];
  if (!Array.isArray(raw)) {
    throw new MalformedResponse("field diagnostics: expected a list");
  }
  for (const entry of raw) {
    const d = asRecord(entry, "diagnostic");
    diags.push({ item: str(d, "item"), stage: str(d, "stage"), message: str(d, "message") });
  }
  return {
    id: str(o, "id"),
    owner: str(o, "owner"),
    kind: str(o, "kind"),
    mode: str(o, "mode"),
    repo: str(o, "repo"),
    state: str(o, "state"),
    detail: str(o, "detail"),
    diagnostics: diags,
    planChanged: strList(o, "plan_changed"),
    planAffected: strList(o, "plan_affected"),
    verifiedItems: strList(o, "verified_items"),
    recomputed: num(o, "recomputed"),
    commit: strOrNull(o, "commit"),
  };
}

export class ApiClient {
  private readonly base: string;
  private readonly fetchImpl: FetchLike;

  constructor(
    baseUrl: string,
    readonly user: string | null = null,
    fetchImpl?: FetchLike,
  ) {
    this.base = baseUrl.replace(/\/+$/, "");
    this.fetchImpl = fetchImpl ?? ((url, init) => globalThis.fetch(url, init));
  }

  /** Same server, different principal (or anonymous when null). */
  as(user: string | null): ApiClient {
    return new ApiClient(this.base, user, this.fetchImpl);
  }

  private async request(method: string, path: string, body?: unknown): Promise<Response> {
    const headers: Record<string, string> = {};
    if (this.user !== null) headers["X-User"] = this.user;
    const init: RequestInit = { method, headers };
    if (body !== undefined) {
      headers["Content-Type"] = "application/json";
      init.body = JSON.stringify(body);
    }
    const res = await this.fetchImpl(this.base + path, init);
    if (!res.ok) throw await readError(res);
    return res;
  }

  private async json(method: string, path: string, body?: unknown): Promise<unknown> {
    const res = await this.request(method, path, body);
    try {
      return await res.json();
    } catch {
      throw new MalformedResponse(`${method} ${path}: response is not JSON`);
    }
  }

  /** Server-rendered article page, as an HTML string. */
  async articleHtml(repo: string, article: string): Promise<string> {
    const res = await this.request("GET", `/wiki/${repo}/article/${articlePath(article)}`);
    return res.text();
  }

  async itemInfo(repo: string, article: string, item: string): Promise<ItemInfo> {
    const body = await this.json("GET", `/wiki/${repo}/item/${articlePath(article)}/${item}`);
    return parseItemInfo(body);
  }

  /** Dry-run impact preview; never enqueues work. */
  async predictEdit(
    repo: string,
    article: string,
    item: string,
    newText: string,
  ): Promise<EditPrediction> {
    const body = await this.json("POST", "/edit?dry_run=true", {
      repo,
      article,
      item,
      new_text: newText,
    });
    const o = asRecord(body, "prediction");
    return {
      editClass: str(o, "edit_class"),
      changed: strList(o, "changed"),
      affected: strList(o, "affected"),
    };
  }

  /** Enqueue a delimited item edit; resolves to the job id. */
  async submitEdit(
    repo: string,
    article: string,
    item: string,
    newText: string,
    mode?: string,
  ): Promise<string> {
    const payload: Json = { repo, article, item, new_text: newText };
    if (mode !== undefined) payload["mode"] = mode;
    const body = await this.json("POST", "/edit", payload);
    return str(asRecord(body, "edit response"), "job_id");
  }

  async job(jobId: string): Promise<JobInfo> {
    return parseJobInfo(await this.json("GET", `/jobs/${jobId}`));
  }

  /** The caller's own jobs, all states, oldest first. */
  async queue(): Promise<JobInfo[]> {
    const body = await this.json("GET", "/queue");
    if (!Array.isArray(body)) {
      throw new MalformedResponse("queue: expected a list");
    }
    return body.map(parseJobInfo);
  }

  async cancelJob(jobId: string): Promise<JobInfo> {
    return parseJobInfo(await this.json("DELETE", `/jobs/${jobId}`));
  }

  async stats(repo: string, granularity: "item" | "file" = "item"): Promise<StatsInfo> {
    const body = await this.json("GET", `/stats/${repo}?granularity=${granularity}`);
    const o = asRecord(body, "stats");
    return {
      items: num(o, "items"),
      deps: num(o, "deps"),
      tdeps: num(o, "tdeps"),
      p: num(o, "p"),
      arl: num(o, "arl"),
      mrl: num(o, "mrl"),
    };
  }

  async register(username: string, publicKey: string): Promise<UserInfo> {
    const body = await this.json("POST", "/register", {
      username,
      public_key: publicKey,
    });
    const o = asRecord(body, "user");
    return { username: str(o, "username"), classes: strList(o, "classes") };
  }

  async createRepo(name: string): Promise<RepoInfo> {
    const body = await this.json("POST", "/repos", { name });
    const o = asRecord(body, "repo");
    return { name: str(o, "name"), creator: str(o, "creator"), head: str(o, "head") };
  }
}

async function readError(res: Response): Promise<ApiError> {
  let code = "Internal";
  let message = `HTTP ${res.status}`;
  try {
    const body = asRecord(await res.json(), "error body");
    code = str(body, "error");
    message = str(body, "message");
  } catch {
    // non-JSON error body; keep the fallback
  }
  return new ApiError(res.status, code, message);
}
