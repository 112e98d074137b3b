/** Browser entry point: wires the API client, view state, editor flow and
 * job poller to the static page in index.html.
 *
 * The article pane shows the server-rendered HTML verbatim; clicks on its
 * edit links open the single delimited editor. Verification feedback
 * arrives by polling and lands both in the watchlist pane and inline at
 * the item that was edited.
 */

import { ApiClient, ApiError, type JobInfo } from "./api.js";
import { EditorController } from "./editor.js";
import { JobPoller } from "./poller.js";
import { ViewState } from "./state.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing #${id} in index.html`);
  return node as T;
}

function jobLabel(job: JobInfo): string {
  const head = `${job.id} [${job.state}] ${job.repo}`;
  return job.detail === "" ? head : `${head}: ${job.detail}`;
}

export function startApp(): void {
  const view = new ViewState();
  let api = new ApiClient(window.location.origin, null);
  let editorCtl: EditorController;

  const userInput = el<HTMLInputElement>("user");
  const repoInput = el<HTMLInputElement>("repo");
  const articleInput = el<HTMLInputElement>("article");
  const loadButton = el<HTMLButtonElement>("load");
  const articlePane = el<HTMLDivElement>("article-pane");
  const statusLine = el<HTMLDivElement>("status-line");

  const editorPanel = el<HTMLDivElement>("editor-panel");
  const editorTitle = el<HTMLDivElement>("editor-title");
  const draftArea = el<HTMLTextAreaElement>("draft");
  const predictionBox = el<HTMLDivElement>("prediction");
  const previewButton = el<HTMLButtonElement>("preview");
  const submitButton = el<HTMLButtonElement>("submit");
  const closeButton = el<HTMLButtonElement>("close-editor");

  const watchlistBox = el<HTMLUListElement>("watchlist");
  const queueBox = el<HTMLUListElement>("queue");
  const refreshQueueButton = el<HTMLButtonElement>("refresh-queue");

  const jobRecords = new Map<string, JobInfo>();
  const poller = new JobPoller(
    { job: (id) => api.job(id) },
    view,
    {
      onUpdate: (job) => {
        jobRecords.set(job.id, job);
        renderWatchlist();
        if (job.state === "failed") showDiagnostics(job);
      },
    },
  );

  function rebuildClient(): void {
    const user = userInput.value.trim();
    api = new ApiClient(window.location.origin, user === "" ? null : user);
    editorCtl = new EditorController(api, view, poller);
  }
  rebuildClient();
  userInput.addEventListener("change", rebuildClient);

  function report(err: unknown): void {
    statusLine.textContent =
      err instanceof ApiError ? `${err.code}: ${err.message}` : String(err);
  }

  function renderEditor(): void {
    const editor = view.editor;
    editorPanel.hidden = editor === null;
    if (editor === null) return;
    editorTitle.textContent = `${editor.article} / ${editor.item}`;
    draftArea.value = editor.draft;
    draftArea.readOnly = !editor.canWrite;
    submitButton.disabled = !editor.canWrite;
    previewButton.disabled = !editor.canWrite;
    submitButton.title = editor.denyReason ?? "";
    previewButton.title = editor.denyReason ?? "";
    if (editor.prediction === null) {
      predictionBox.textContent = editor.denyReason ?? "no preview yet";
    } else {
      const n = editor.prediction.affected.length;
      predictionBox.textContent =
        `${n} item${n === 1 ? "" : "s"} to re-verify ` +
        `(${editor.prediction.editClass}): ${editor.prediction.affected.join(", ")}`;
    }
  }

  function renderWatchlist(): void {
    watchlistBox.replaceChildren();
    for (const jobId of view.watchedJobs()) {
      const li = document.createElement("li");
      const record = jobRecords.get(jobId);
      li.textContent =
        record === undefined
          ? `${jobId} [${view.jobState(jobId) ?? "..."}]`
          : jobLabel(record);
      watchlistBox.append(li);
    }
  }

  function showDiagnostics(job: JobInfo): void {
    for (const diag of job.diagnostics) {
      const itemName = diag.item.split("#")[1] ?? diag.item;
      const anchor = articlePane.querySelector(`#${CSS.escape(itemName)}`);
      if (anchor === null) continue;
      const note = document.createElement("div");
      note.className = "diagnostic";
      note.textContent = `${diag.stage}: ${diag.message}`;
      anchor.append(note);
    }
  }

  async function loadArticle(): Promise<void> {
    view.repo = repoInput.value.trim();
    view.article = articleInput.value.trim();
    try {
      const html = await api.articleHtml(view.repo, view.article);
      articlePane.innerHTML = html;
      statusLine.textContent = `${view.repo}: ${view.article}`;
      for (const link of articlePane.querySelectorAll<HTMLAnchorElement>(".edit-link")) {
        link.addEventListener("click", (event) => {
          event.preventDefault();
          const item = link.dataset["item"];
          if (item !== undefined) void openEditor(item);
        });
      }
    } catch (err) {
      report(err);
    }
  }

  async function openEditor(item: string): Promise<void> {
    if (view.article === null) return;
    try {
      await editorCtl.open(view.repo, view.article, item);
      renderEditor();
    } catch (err) {
      report(err);
    }
  }

  async function renderQueue(): Promise<void> {
    try {
      const jobs = await api.queue();
      queueBox.replaceChildren();
      for (const job of jobs) {
        const li = document.createElement("li");
        li.textContent = jobLabel(job);
        if (job.state === "queued" || job.state === "running") {
          const cancel = document.createElement("button");
          cancel.textContent = "cancel";
          cancel.addEventListener("click", async () => {
            try {
              const updated = await api.cancelJob(job.id);
              jobRecords.set(updated.id, updated);
              view.recordJobState(updated.id, updated.state);
              renderWatchlist();
              await renderQueue();
            } catch (err) {
              report(err);
            }
          });
          li.append(" ", cancel);
        }
        queueBox.append(li);
      }
    } catch (err) {
      report(err);
    }
  }

  loadButton.addEventListener("click", () => void loadArticle());
  refreshQueueButton.addEventListener("click", () => void renderQueue());
  closeButton.addEventListener("click", () => {
    editorCtl.close();
    renderEditor();
  });
  draftArea.addEventListener("input", () => {
    if (view.editor !== null) editorCtl.setDraft(draftArea.value);
  });
  previewButton.addEventListener("click", async () => {
    try {
      await editorCtl.preview();
      renderEditor();
    } catch (err) {
      report(err);
    }
  });
  submitButton.addEventListener("click", async () => {
    try {
      const { jobId, outcome } = await editorCtl.submit();
      renderEditor();
      renderWatchlist();
      statusLine.textContent = `submitted ${jobId}`;
      const finished = await outcome;
      statusLine.textContent = jobLabel(finished);
      if (finished.state === "succeeded") await loadArticle();
    } catch (err) {
      report(err);
    }
  });
}

startApp();
