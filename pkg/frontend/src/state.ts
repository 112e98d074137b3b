/** Client view state and its two structural invariants.
 *
 * At most one item editor is open at a time, and the job watchlist only
 * ever moves a job's displayed state forward along the server's lifecycle
 * (queued, then running, then exactly one terminal state). Stale poll
 * responses arriving out of order can therefore never roll a display back.
 */

import type { EditPrediction } from "./api.js";

export type JobStateName = "queued" | "running" | "succeeded" | "failed" | "cancelled";

const RANK: Record<JobStateName, number> = {
  queued: 0,
  running: 1,
  succeeded: 2,
  failed: 2,
  cancelled: 2,
};

export function isJobStateName(state: string): state is JobStateName {
  return state in RANK;
}

export function isTerminalState(state: JobStateName): boolean {
  return RANK[state] === 2;
}

export class EditorAlreadyOpen extends Error {
  constructor(item: string) {
    super(`an editor is already open (${item}); close it first`);
    this.name = "EditorAlreadyOpen";
  }
}

export class NoOpenEditor extends Error {
  constructor() {
    super("no editor is open");
    this.name = "NoOpenEditor";
  }
}

export class UnknownJobState extends Error {
  constructor(state: string) {
    super(`server reported an unknown job state ${JSON.stringify(state)}`);
    this.name = "UnknownJobState";
  }
}

export interface OpenEditor {
  repo: string;
  article: string;
  item: string;
  /** Editable text, initialized to the item's exact source span. */
  draft: string;
  /** Whether the server would accept a write from this user. */
  canWrite: boolean;
  /** Server's denial message when canWrite is false (shown as a tooltip). */
  denyReason: string | null;
  /** Last fetched impact preview, or null before the first one. */
  prediction: EditPrediction | null;
  /** Draft text the prediction was computed for (staleness check). */
  predictedDraft: string | null;
}

export class ViewState {
  repo = "main";
  article: string | null = null;
  editor: OpenEditor | null = null;
  private readonly states = new Map<string, JobStateName | null>();
  private readonly histories = new Map<string, JobStateName[]>();

  openEditor(fields: OpenEditor): OpenEditor {
    if (this.editor !== null) {
      throw new EditorAlreadyOpen(this.editor.item);
    }
    this.editor = { ...fields };
    return this.editor;
  }

  closeEditor(): void {
    this.editor = null;
  }

  setDraft(text: string): void {
    if (this.editor === null) throw new NoOpenEditor();
    this.editor.draft = text;
  }

  setPrediction(prediction: EditPrediction, forDraft: string): void {
    if (this.editor === null) throw new NoOpenEditor();
    this.editor.prediction = prediction;
    this.editor.predictedDraft = forDraft;
  }

  /** Add a job to the watchlist; its state stays null until first polled. */
  watch(jobId: string): void {
    if (!this.states.has(jobId)) {
      this.states.set(jobId, null);
      this.histories.set(jobId, []);
    }
  }

  watchedJobs(): string[] {
    return [...this.states.keys()];
  }

  jobState(jobId: string): JobStateName | null {
    return this.states.get(jobId) ?? null;
  }

  /** States this job has displayed, in order; skips are possible when a
   * short-lived state falls between two polls. */
  jobHistory(jobId: string): readonly JobStateName[] {
    return this.histories.get(jobId) ?? [];
  }

  /** Apply a freshly fetched state; returns whether the display changed.
   *
   * Backward and terminal-to-terminal moves are ignored so that late or
   * reordered responses cannot un-finish a job.
   */
  recordJobState(jobId: string, state: string): boolean {
    if (!isJobStateName(state)) throw new UnknownJobState(state);
    this.watch(jobId);
    const last = this.states.get(jobId) ?? null;
    if (last !== null && (isTerminalState(last) || RANK[state] <= RANK[last])) {
      return false;
    }
    this.states.set(jobId, state);
    this.histories.get(jobId)!.push(state);
    return true;
  }
}
