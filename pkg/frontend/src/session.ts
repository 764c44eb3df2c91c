// Annotator session state machine, free of any DOM dependency so it can
// be driven headlessly in tests and wired to real elements in main.ts.
//
// The flow it enforces mirrors the annotation protocol: the guidelines
// must be fetched and acknowledged before the first task is requested,
// every label goes to the task the server actually served, and the
// session only advances when the server confirms the label (201). A 409
// means our hold went stale (for example the server restarted), so the
// cure is to drop the local task and fetch again; a 422 is a bad
// submission and is surfaced without losing the task.

import { ApiClient, ApiError } from './api.js';
import type { Guidelines, Label, Round, Task, Verdict } from './types.js';

export type Phase = 'idle' | 'guidelines' | 'labeling' | 'done';

export interface SessionState {
  phase: Phase;
  guidelines: Guidelines | null;
  task: Task | null;
  round: Round;
  submitted: number;
  lastVerdict: Verdict;
  error: string | null;
}

// Number keys are the fastest way to label; 1/2/3 follow the on-screen
// button order negative, neutral, positive.
export function keyToLabel(key: string): Label | null {
  switch (key) {
    case '1':
      return -1;
    case '2':
      return 0;
    case '3':
      return 1;
    default:
      return null;
  }
}

export class AnnotationSession {
  private readonly client: ApiClient;
  private readonly annotatorId: string;
  private readonly state: SessionState;

  constructor(client: ApiClient, annotatorId: string, round: Round = 1) {
    this.client = client;
    this.annotatorId = annotatorId;
    this.state = {
      phase: 'idle',
      guidelines: null,
      task: null,
      round,
      submitted: 0,
      lastVerdict: null,
      error: null,
    };
  }

  // Read-only view for renderers; mutating it does not affect the session.
  snapshot(): SessionState {
    return {
      ...this.state,
      guidelines: this.state.guidelines,
      task: this.state.task,
    };
  }

  // Register and load the guidelines. The session stays in the
  // 'guidelines' phase until acknowledge() is called; no task can be
  // fetched or labeled before that.
  async start(): Promise<Guidelines> {
    await this.client.register(this.annotatorId);
    const guidelines = await this.client.guidelines();
    this.state.guidelines = guidelines;
    this.state.phase = 'guidelines';
    this.state.error = null;
    return guidelines;
  }

  // The annotator confirms having read the rules; only now does the
  // session ask the server for work.
  async acknowledgeGuidelines(): Promise<Task | null> {
    if (this.state.phase !== 'guidelines') {
      throw new Error(`cannot acknowledge guidelines in phase ${this.state.phase}`);
    }
    this.state.phase = 'labeling';
    return this.nextTask();
  }

  private async nextTask(): Promise<Task | null> {
    const task = await this.client.fetchTask(this.annotatorId, this.state.round);
    this.state.task = task;
    if (task === null) {
      this.state.phase = 'done';
    }
    return task;
  }

  // Submit a label for the current task. Resolves to the next task
  // (null when the round is finished). Throws on states where labeling
  // is not allowed.
  async submit(label: Label): Promise<Task | null> {
    if (this.state.phase !== 'labeling' || this.state.task === null) {
      throw new Error('no task to label; acknowledge the guidelines and fetch one first');
    }
    const docId = this.state.task.doc_id;
    try {
      const receipt = await this.client.submitLabel(this.annotatorId, docId, label);
      this.state.submitted += 1;
      this.state.lastVerdict = receipt.verdict;
      this.state.error = null;
      return this.nextTask();
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        // Stale hold: the server no longer considers this task ours.
        // Refetch instead of retrying the same doc.
        this.state.error = String(err.detail);
        return this.nextTask();
      }
      if (err instanceof ApiError && err.status === 422) {
        // Bad submission; the hold survives, so keep the task on screen.
        this.state.error = String(err.detail);
        return this.state.task;
      }
      throw err;
    }
  }

  // Put the current task aside. The server re-serves the held task, so
  // this is a breather rather than a reassignment; the same document
  // comes back on the next fetch.
  async skip(): Promise<Task | null> {
    if (this.state.phase !== 'labeling') {
      throw new Error('nothing to skip');
    }
    return this.nextTask();
  }
}
