// Wire formats for the annotation service JSON API. These mirror the
// response bodies the server documents in its published schema; every
// field name and shape here must match what the server actually sends.

export type Label = -1 | 0 | 1;

export type Round = 1 | 2;

export interface Task {
  doc_id: string;
  text: string;
  round: Round;
  guidelines_version: number;
}

export interface LabelSubmission {
  annotator_id: string;
  doc_id: string;
  label: Label;
  client_timestamp?: string | null;
}

export type Verdict = 'gold' | 'needs_round2' | 'removed' | null;

export interface LabelReceipt {
  doc_id: string;
  round: Round;
  verdict: Verdict;
}

export interface AnnotatorRegistration {
  annotator_id: string;
}

export interface AgreementReport {
  fleiss_kappa: number | null;
  raw_interagreement: number | null;
  self_agreement: Record<string, number>;
  overall_self_agreement: number | null;
}

export interface CorpusStats {
  class_counts: Record<string, number>;
  length_histogram: Record<string, number>;
  emoji_histogram: Record<string, number>;
  mean_length_by_label: Record<string, number>;
  skipped_unlabeled: number;
}

export interface Guidelines {
  version: number;
  scale: Record<string, string>;
  rules: string[];
  emoji_note?: string;
}

export interface ProgressStates {
  gold: number;
  round1_open: number;
  round2_open: number;
  removed: number;
}

export interface AnnotatorProgress {
  labels: number;
  probes: number;
}

export interface Progress {
  documents: number;
  states: ProgressStates;
  per_annotator: Record<string, AnnotatorProgress>;
}
