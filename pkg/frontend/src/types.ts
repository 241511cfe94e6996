/**
 * Wire types for the screening service. Field names mirror the JSON payloads
 * exactly; the console stores and renders these verbatim and never derives
 * a metric or a disposition on its own.
 */

export type Role = 'technician' | 'reviewer';

export type Scheme = 'RDR' | 'ACR';

export type MdDecision = 'retake' | 'proceed_ungradable';

export const GRADES = ['R0', 'R1', 'R2', 'R3', 'R4', 'R5', 'R6'] as const;

export interface StageRecord {
  stage: string;
  output: unknown;
  decision: string;
}

export interface QualityGate {
  passed: boolean;
  reasons: string[];
}

export interface ScreeningResult {
  image_id: string;
  stages: StageRecord[];
  quality: QualityGate;
  disposition: string;
  grades: string[];
  retakes_used: number;
  referral: Record<Scheme, string>;
}

export interface UploadComplete {
  study_id: string;
  image_id: string;
  status: 'complete';
  result: ScreeningResult;
}

export interface UploadAwaitingMd {
  study_id: string;
  image_id: string;
  status: 'awaiting_md_decision';
  reason: string;
  stages: StageRecord[];
}

export type UploadResponse = UploadComplete | UploadAwaitingMd;

export interface StudyCreated {
  study_id: string;
  status: string;
}

export interface ImageEntry {
  image_id: string;
  metadata: Record<string, string>;
  attempts: number;
  status: string;
  pending_reason: string | null;
  result: ScreeningResult | null;
}

export interface StudyResults {
  study_id: string;
  status: string;
  results: ImageEntry[];
}

export interface FeedbackDraft {
  study_id: string;
  image_id: string;
  reviewer: string;
  grade: string;
  quality?: string | null;
  note?: string;
}

export interface FeedbackEntry {
  feedback_id: string;
  study_id: string;
  image_id: string;
  reviewer: string;
  grade: string;
  quality: string | null;
  note: string;
  timestamp: number;
}

/** Exact rational reported as numerator/denominator plus float and percent. */
export interface MetricCell {
  numerator: number;
  denominator: number;
  value: number;
  percent: number;
}

export interface RatioCell {
  numerator: number;
  denominator: number;
  value: number;
}

export interface FairnessBlock {
  attribute: string;
  unprivileged: string | string[];
  privileged: string | string[];
  di: RatioCell | null;
  eod_0: RatioCell | null;
  eod_1: RatioCell | null;
  four_fifths: 'pass' | 'fail' | 'undefined';
  n_unprivileged: number;
  n_privileged: number;
  overlap_flag: boolean;
  di_bounds: [number, number];
}

export interface ScenarioRef {
  name: string;
  unit: string;
  scheme: string;
}

export interface EvaluationReport {
  scenario: ScenarioRef;
  n_pairs: number;
  confusion: { tp: number; tn: number; fp: number; fn: number };
  metrics: Record<string, MetricCell | null>;
  notes: { headline_f1: string };
  roc?: { auc: RatioCell; points: [number | null, number, number][] };
  fairness?: FairnessBlock;
  groups?: Record<string, unknown>;
}

export interface ApiErrorBody {
  error: string;
  detail: string;
}
