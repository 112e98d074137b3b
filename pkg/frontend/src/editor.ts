/** The delimited per-item edit flow.
 *
 * Opening an editor fetches the item's exact source span and probes
 * writability with a dry-run of the unchanged text (dry runs never enqueue
 * work, so the probe is read-only). Submission always has a fresh impact
 * preview first: the set of items the edit would re-verify is displayed
 * before any job is created. All of it is server data; this module adds no
 * dependency analysis of its own.
 */

import { ApiClient, ApiError, type EditPrediction, type JobInfo } from "./api.js";
import { JobPoller } from "./poller.js";
import { EditorAlreadyOpen, NoOpenEditor, ViewState, type OpenEditor } from "./state.js";

export class ItemNotFound extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ItemNotFound";
  }
}

export class EmptyDraft extends Error {
  constructor() {
    super("the draft is empty; nothing to submit");
    this.name = "EmptyDraft";
  }
}

export class ReadOnlyEditor extends Error {
  constructor(reason: string | null) {
    super(reason ?? "this user may not write the repository");
    this.name = "ReadOnlyEditor";
  }
}

export interface SubmitResult {
  jobId: string;
  /** Resolves when the job reaches a terminal state. */
  outcome: Promise<JobInfo>;
}

export class EditorController {
  constructor(
    private readonly api: ApiClient,
    private readonly view: ViewState,
    private readonly poller: JobPoller,
  ) {}

  /** Open the single editor on one item of one article. */
  async open(repo: string, article: string, item: string): Promise<OpenEditor> {
    if (this.view.editor !== null) {
      throw new EditorAlreadyOpen(this.view.editor.item);
    }
    let info;
    try {
      info = await this.api.itemInfo(repo, article, item);
    } catch (err) {
      if (err instanceof ApiError && err.status === 404) {
        throw new ItemNotFound(err.message);
      }
      throw err;
    }
    let canWrite = true;
    let denyReason: string | null = null;
    let prediction: EditPrediction | null = null;
    try {
      prediction = await this.api.predictEdit(repo, article, item, info.text);
    } catch (err) {
      if (err instanceof ApiError && err.status === 403) {
        canWrite = false;
        denyReason = err.message;
      } else {
        throw err;
      }
    }
    return this.view.openEditor({
      repo,
      article,
      item,
      draft: info.text,
      canWrite,
      denyReason,
      prediction,
      predictedDraft: prediction === null ? null : info.text,
    });
  }

  setDraft(text: string): void {
    this.view.setDraft(text);
  }

  /** Fetch the impact preview for the current draft. */
  async preview(): Promise<EditPrediction> {
    const editor = this.requireWritable();
    const prediction = await this.api.predictEdit(
      editor.repo,
      editor.article,
      editor.item,
      editor.draft,
    );
    this.view.setPrediction(prediction, editor.draft);
    return prediction;
  }

  /** Submit the draft; the editor closes and the job joins the watchlist. */
  async submit(mode = "full"): Promise<SubmitResult> {
    const editor = this.requireWritable();
    if (editor.draft.trim() === "") throw new EmptyDraft();
    if (editor.predictedDraft !== editor.draft) {
      await this.preview();
    }
    const jobId = await this.api.submitEdit(
      editor.repo,
      editor.article,
      editor.item,
      editor.draft,
      mode,
    );
    this.view.watch(jobId);
    const outcome = this.poller.track(jobId);
    this.view.closeEditor();
    return { jobId, outcome };
  }

  close(): void {
    this.view.closeEditor();
  }

  private requireWritable(): OpenEditor {
    const editor = this.view.editor;
    if (editor === null) throw new NoOpenEditor();
    if (!editor.canWrite) throw new ReadOnlyEditor(editor.denyReason);
    return editor;
  }
}
