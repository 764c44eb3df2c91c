// Browser entry point: wires the session state machine and the
// renderers to the page. Everything interesting lives in the imported
// modules; this file only moves strings into elements and events into
// method calls.

import { ApiClient } from './api.js';
import {
  renderAgreement,
  renderGuidelines,
  renderProgress,
  renderStats,
  renderTask,
} from './render.js';
import { AnnotationSession, keyToLabel } from './session.js';
import type { Label, Round } from './types.js';

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing element #${id}`);
  return node as T;
}

let session: AnnotationSession | null = null;

function show(panel: 'setup' | 'guidelines' | 'task' | 'done'): void {
  for (const name of ['setup', 'guidelines', 'task', 'done']) {
    el(`panel-${name}`).hidden = name !== panel;
  }
}

function refresh(): void {
  if (session === null) return;
  const state = session.snapshot();
  el('status').textContent = `${state.submitted} labeled this session`;
  el('error').textContent = state.error ?? '';
  if (state.phase === 'guidelines' && state.guidelines !== null) {
    el('guidelines-body').innerHTML = renderGuidelines(state.guidelines);
    show('guidelines');
  } else if (state.phase === 'labeling' && state.task !== null) {
    el('task-body').innerHTML = renderTask(state.task);
    show('task');
  } else if (state.phase === 'done') {
    show('done');
  }
}

function reportError(err: unknown): void {
  el('error').textContent = err instanceof Error ? err.message : String(err);
}

async function startSession(): Promise<void> {
  const baseUrl = el<HTMLInputElement>('server-url').value.trim();
  const token = el<HTMLInputElement>('auth-token').value.trim();
  const annotatorId = el<HTMLInputElement>('annotator-id').value.trim();
  const round = Number(el<HTMLSelectElement>('round').value) as Round;
  if (!annotatorId) {
    el('error').textContent = 'annotator id is required';
    return;
  }
  const client = new ApiClient({
    baseUrl: baseUrl || window.location.origin,
    token: token || undefined,
  });
  session = new AnnotationSession(client, annotatorId, round);
  await session.start();
  refresh();
}

async function submitLabel(label: Label): Promise<void> {
  if (session === null) return;
  await session.submit(label);
  refresh();
}

async function refreshDashboards(): Promise<void> {
  const baseUrl = el<HTMLInputElement>('server-url').value.trim();
  const token = el<HTMLInputElement>('auth-token').value.trim();
  const client = new ApiClient({
    baseUrl: baseUrl || window.location.origin,
    token: token || undefined,
  });
  const [stats, agreement, progress] = await Promise.all([
    client.stats(),
    client.agreement(),
    client.progress(),
  ]);
  el('dash-stats').innerHTML = renderStats(stats);
  el('dash-agreement').innerHTML = renderAgreement(agreement);
  el('dash-progress').innerHTML = renderProgress(progress);
}

function wire(): void {
  el('start').addEventListener('click', () => startSession().catch(reportError));
  el('ack-guidelines').addEventListener('click', () => {
    session
      ?.acknowledgeGuidelines()
      .then(refresh)
      .catch(reportError);
  });
  el('label-neg').addEventListener('click', () => submitLabel(-1).catch(reportError));
  el('label-neu').addEventListener('click', () => submitLabel(0).catch(reportError));
  el('label-pos').addEventListener('click', () => submitLabel(1).catch(reportError));
  el('skip').addEventListener('click', () => {
    session
      ?.skip()
      .then(refresh)
      .catch(reportError);
  });
  el('refresh-dashboards').addEventListener('click', () =>
    refreshDashboards().catch(reportError),
  );
  document.addEventListener('keydown', (event) => {
    if (el('panel-task').hidden) return;
    const target = event.target as HTMLElement | null;
    if (target !== null && ['INPUT', 'SELECT', 'TEXTAREA'].includes(target.tagName)) return;
    const label = keyToLabel(event.key);
    if (label !== null) submitLabel(label).catch(reportError);
  });
  show('setup');
}

wire();
