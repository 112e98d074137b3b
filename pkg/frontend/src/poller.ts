/** Job status polling, serialized per job id.
 *
 * Tracking the same job twice shares one poll loop; different jobs poll
 * concurrently. Each observed state feeds the view's forward-only
 * watchlist, and the loop stops at the first terminal state.
 */

import type { ApiClient, JobInfo } from "./api.js";
import { ViewState, isJobStateName, isTerminalState } from "./state.js";

export interface PollerOptions {
  /** Delay between polls; the production default is one second. */
  intervalMs?: number;
  /** Injectable for tests; defaults to a real setTimeout sleep. */
  sleep?: (ms: number) => Promise<void>;
  /** Called after every poll with the fresh job record. */
  onUpdate?: (job: JobInfo) => void;
}

const realSleep = (ms: number) => new Promise<void>((resolve) => setTimeout(resolve, ms));

export class JobPoller {
  private readonly intervalMs: number;
  private readonly sleep: (ms: number) => Promise<void>;
  private readonly onUpdate?: (job: JobInfo) => void;
  private readonly inflight = new Map<string, Promise<JobInfo>>();

  constructor(
    private readonly api: Pick<ApiClient, "job">,
    private readonly view: ViewState,
    options: PollerOptions = {},
  ) {
    this.intervalMs = options.intervalMs ?? 1000;
    this.sleep = options.sleep ?? realSleep;
    this.onUpdate = options.onUpdate;
  }

  /** Poll until the job reaches a terminal state; resolves to its record. */
  track(jobId: string): Promise<JobInfo> {
    const existing = this.inflight.get(jobId);
    if (existing !== undefined) return existing;
    const loop = this.poll(jobId).finally(() => this.inflight.delete(jobId));
    this.inflight.set(jobId, loop);
    return loop;
  }

  tracking(jobId: string): boolean {
    return this.inflight.has(jobId);
  }

  private async poll(jobId: string): Promise<JobInfo> {
    this.view.watch(jobId);
    for (;;) {
      const job = await this.api.job(jobId);
      this.view.recordJobState(job.id, job.state);
      this.onUpdate?.(job);
      if (isJobStateName(job.state) && isTerminalState(job.state)) {
        return job;
      }
      await this.sleep(this.intervalMs);
    }
  }
}
