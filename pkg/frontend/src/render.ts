// HTML renderers. Each takes a response body and returns a markup
// string; main.ts assigns them to innerHTML. Keeping them as pure
// string functions means the tests can check what annotators see
// without a browser.
//
// Dashboard renderers echo the server's numbers verbatim: values are
// serialized with JSON.stringify, never reformatted or rounded, so the
// page shows exactly what the API returned.

import type {
  AgreementReport,
  CorpusStats,
  Guidelines,
  Progress,
  Task,
} from './types.js';

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;');
}

// Exact textual form of a JSON scalar as the API sent it.
function verbatim(value: number | string | null): string {
  return escapeHtml(JSON.stringify(value));
}

export function renderGuidelines(guidelines: Guidelines): string {
  const scale = Object.entries(guidelines.scale)
    .map(([value, meaning]) => `<dt>${escapeHtml(value)}</dt><dd>${escapeHtml(meaning)}</dd>`)
    .join('');
  const rules = guidelines.rules
    .map((rule) => `<li dir="auto">${escapeHtml(rule)}</li>`)
    .join('');
  const note = guidelines.emoji_note
    ? `<p class="emoji-note" dir="auto">${escapeHtml(guidelines.emoji_note)}</p>`
    : '';
  return [
    `<h2>Annotation guidelines (version ${verbatim(guidelines.version)})</h2>`,
    `<dl class="scale">${scale}</dl>`,
    `<ol class="rules">${rules}</ol>`,
    note,
  ].join('\n');
}

// The microblog text is Persian, so the card body is right-to-left;
// dir="auto" would misfire on lines that open with a latin hashtag.
export function renderTask(task: Task): string {
  return [
    `<p class="task-meta">doc ${escapeHtml(task.doc_id)} (round ${verbatim(task.round)})</p>`,
    `<blockquote class="task-text" dir="rtl" lang="fa">${escapeHtml(task.text)}</blockquote>`,
  ].join('\n');
}

function renderCountTable(counts: Record<string, number>, caption: string): string {
  const rows = Object.entries(counts)
    .map(([key, value]) => `<tr><th>${escapeHtml(key)}</th><td>${verbatim(value)}</td></tr>`)
    .join('');
  return `<table><caption>${escapeHtml(caption)}</caption><tbody>${rows}</tbody></table>`;
}

export function renderStats(stats: CorpusStats): string {
  return [
    '<h2>Corpus statistics</h2>',
    renderCountTable(stats.class_counts, 'gold labels by class'),
    renderCountTable(stats.length_histogram, 'documents by token length'),
    renderCountTable(stats.emoji_histogram, 'documents by emoji count'),
    renderCountTable(stats.mean_length_by_label, 'mean token length by class'),
    `<p>unlabeled documents skipped: ${verbatim(stats.skipped_unlabeled)}</p>`,
  ].join('\n');
}

export function renderAgreement(report: AgreementReport): string {
  const perAnnotator = Object.entries(report.self_agreement)
    .map(([who, score]) => `<tr><th>${escapeHtml(who)}</th><td>${verbatim(score)}</td></tr>`)
    .join('');
  return [
    '<h2>Agreement</h2>',
    `<p>Fleiss kappa: ${verbatim(report.fleiss_kappa)}</p>`,
    `<p>raw inter-annotator agreement: ${verbatim(report.raw_interagreement)}</p>`,
    `<p>overall self-agreement: ${verbatim(report.overall_self_agreement)}</p>`,
    `<table><caption>self-agreement by annotator</caption><tbody>${perAnnotator}</tbody></table>`,
  ].join('\n');
}

export function renderProgress(progress: Progress): string {
  const states = progress.states;
  const perAnnotator = Object.entries(progress.per_annotator)
    .map(
      ([who, p]) =>
        `<tr><th>${escapeHtml(who)}</th><td>${verbatim(p.labels)}</td><td>${verbatim(p.probes)}</td></tr>`,
    )
    .join('');
  return [
    '<h2>Progress</h2>',
    `<p>documents: ${verbatim(progress.documents)}</p>`,
    renderCountTable(
      {
        gold: states.gold,
        round1_open: states.round1_open,
        round2_open: states.round2_open,
        removed: states.removed,
      },
      'documents by state',
    ),
    `<table><caption>labels per annotator</caption>` +
      `<thead><tr><th>annotator</th><th>labels</th><th>probes</th></tr></thead>` +
      `<tbody>${perAnnotator}</tbody></table>`,
  ].join('\n');
}
