import { describe, expect, it } from 'vitest';

import { ApiClient } from '../src/api.js';
import { AnnotationSession, keyToLabel } from '../src/session.js';
import type { Guidelines, Task } from '../src/types.js';
import { FetchStub } from './stubs.js';

const GUIDELINES: Guidelines = {
  version: 1,
  scale: { '-1': 'negative', '0': 'neutral', '+1': 'positive' },
  rules: ['r1', 'r2', 'r3', 'r4', 'r5', 'r6', 'r7'],
};

const TASK_A: Task = { doc_id: 'dA', text: 'متن الف', round: 1, guidelines_version: 1 };
const TASK_B: Task = { doc_id: 'dB', text: 'متن ب', round: 1, guidelines_version: 1 };

function makeSession(stub: FetchStub): AnnotationSession {
  const client = new ApiClient({ baseUrl: 'http://stub', fetchImpl: stub.fetch });
  return new AnnotationSession(client, 'a1');
}

function baseStub(): FetchStub {
  return new FetchStub()
    .on('POST /api/annotators', 201, { annotator_id: 'a1' })
    .on('GET /api/guidelines', 200, GUIDELINES);
}

describe('AnnotationSession', () => {
  it('starts in the guidelines phase with the rules loaded', async () => {
    const stub = baseStub();
    const session = makeSession(stub);
    const guidelines = await session.start();
    expect(guidelines.rules).toHaveLength(7);
    expect(session.snapshot().phase).toBe('guidelines');
  });

  it('does not touch the task endpoint before the guidelines are acknowledged', async () => {
    const stub = baseStub();
    const session = makeSession(stub);
    await session.start();
    expect(stub.pathsCalled()).toEqual(['POST /api/annotators', 'GET /api/guidelines']);
  });

  it('refuses to submit before the guidelines are acknowledged', async () => {
    const session = makeSession(baseStub());
    await session.start();
    await expect(session.submit(1)).rejects.toThrow(/guidelines/);
  });

  it('fetches the first task on acknowledgement', async () => {
    const stub = baseStub().on('GET /api/task', 200, TASK_A);
    const session = makeSession(stub);
    await session.start();
    const task = await session.acknowledgeGuidelines();
    expect(task?.doc_id).toBe('dA');
    expect(session.snapshot().phase).toBe('labeling');
  });

  it('rejects double acknowledgement', async () => {
    const stub = baseStub().on('GET /api/task', 200, TASK_A);
    const session = makeSession(stub);
    await session.start();
    await session.acknowledgeGuidelines();
    await expect(session.acknowledgeGuidelines()).rejects.toThrow(/phase/);
  });

  it('advances to the next task after a confirmed label', async () => {
    const stub = baseStub()
      .on('GET /api/task', 200, TASK_A)
      .on('GET /api/task', 200, TASK_B)
      .on('POST /api/label', 201, { doc_id: 'dA', round: 1, verdict: null });
    const session = makeSession(stub);
    await session.start();
    await session.acknowledgeGuidelines();
    const next = await session.submit(1);
    expect(next?.doc_id).toBe('dB');
    const state = session.snapshot();
    expect(state.submitted).toBe(1);
    expect(state.lastVerdict).toBeNull();
  });

  it('records the adjudication verdict from the receipt', async () => {
    const stub = baseStub()
      .on('GET /api/task', 200, TASK_A)
      .on('GET /api/task', 204)
      .on('POST /api/label', 201, { doc_id: 'dA', round: 1, verdict: 'gold' });
    const session = makeSession(stub);
    await session.start();
    await session.acknowledgeGuidelines();
    await session.submit(-1);
    expect(session.snapshot().lastVerdict).toBe('gold');
  });

  it('finishes when the server runs out of tasks', async () => {
    const stub = baseStub()
      .on('GET /api/task', 200, TASK_A)
      .on('GET /api/task', 204)
      .on('POST /api/label', 201, { doc_id: 'dA', round: 1, verdict: null });
    const session = makeSession(stub);
    await session.start();
    await session.acknowledgeGuidelines();
    const next = await session.submit(0);
    expect(next).toBeNull();
    expect(session.snapshot().phase).toBe('done');
  });

  it('keeps the task on screen after a 422 and surfaces the detail', async () => {
    const stub = baseStub()
      .on('GET /api/task', 200, TASK_A)
      .on('POST /api/label', 422, { detail: 'label must be -1, 0, or +1' });
    const session = makeSession(stub);
    await session.start();
    await session.acknowledgeGuidelines();
    const task = await session.submit(1);
    expect(task?.doc_id).toBe('dA');
    const state = session.snapshot();
    expect(state.error).toContain('label must be');
    expect(state.submitted).toBe(0);
  });

  it('refetches after a 409 stale hold instead of retrying the same doc', async () => {
    const stub = baseStub()
      .on('GET /api/task', 200, TASK_A)
      .on('GET /api/task', 200, TASK_B)
      .on('POST /api/label', 409, { detail: "doc 'dA' was not served to 'a1'" });
    const session = makeSession(stub);
    await session.start();
    await session.acknowledgeGuidelines();
    const task = await session.submit(1);
    expect(task?.doc_id).toBe('dB');
    expect(session.snapshot().error).toContain('was not served');
  });

  it('serves the same held task again after a skip', async () => {
    const stub = baseStub().on('GET /api/task', 200, TASK_A);
    const session = makeSession(stub);
    await session.start();
    await session.acknowledgeGuidelines();
    const again = await session.skip();
    expect(again?.doc_id).toBe('dA');
  });

  it('maps number keys to the label scale', () => {
    expect(keyToLabel('1')).toBe(-1);
    expect(keyToLabel('2')).toBe(0);
    expect(keyToLabel('3')).toBe(1);
    expect(keyToLabel('x')).toBeNull();
    expect(keyToLabel('Enter')).toBeNull();
  });
});
