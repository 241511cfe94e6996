import { ServiceClient } from '../src/api.js';
import type {
  EvaluationReport,
  ScreeningResult,
  UploadAwaitingMd,
  UploadComplete,
} from '../src/types.js';

export interface CapturedCall {
  url: string;
  method: string;
  headers: Record<string, string>;
  body: unknown;
}

export interface Scripted {
  calls: CapturedCall[];
  client: ServiceClient;
  push(status: number, body: unknown): void;
}

/**
 * ServiceClient over a scripted fetch: responses are consumed in order,
 * requests are captured for assertion. No sockets involved.
 */
export function scriptedClient(token?: string): Scripted {
  const calls: CapturedCall[] = [];
  const queue: Array<{ status: number; body: unknown }> = [];
  const fetchImpl = async (url: string, init?: RequestInit): Promise<Response> => {
    calls.push({
      url,
      method: init?.method ?? 'GET',
      headers: (init?.headers as Record<string, string>) ?? {},
      body: typeof init?.body === 'string' ? JSON.parse(init.body) : undefined,
    });
    const next = queue.shift();
    if (next === undefined) {
      throw new Error(`no scripted response for ${url}`);
    }
    if (next.body === 'NOT_JSON') {
      return new Response('plainly not json', { status: next.status });
    }
    return new Response(JSON.stringify(next.body), {
      status: next.status,
      headers: { 'content-type': 'application/json' },
    });
  };
  const client = new ServiceClient({ baseUrl: 'http://svc.test/', token, fetchImpl });
  return { calls, client, push: (status, body) => queue.push({ status, body }) };
}

export function deferred<T>(): { promise: Promise<T>; resolve: (v: T) => void } {
  let resolve!: (v: T) => void;
  const promise = new Promise<T>((r) => {
    resolve = r;
  });
  return { promise, resolve };
}

export const COMPLETE_RESULT: ScreeningResult = {
  image_id: 'img-1',
  stages: [
    { stage: 'preprocess', output: { scale: 1.0 }, decision: 'standardized' },
    { stage: 'MQ', output: { label: 1, score: 0.9 }, decision: 'pass' },
    { stage: 'MA', output: {}, decision: 'pass' },
    { stage: 'M1', output: { label: 0, score: 0.1 }, decision: 'grade_low' },
    { stage: 'M2', output: { label: 0, score: 0.1 }, decision: 'review_12_months' },
  ],
  quality: { passed: true, reasons: [] },
  disposition: 'review_12_months',
  grades: ['R0', 'R1'],
  retakes_used: 0,
  referral: { RDR: 'non_referable', ACR: 'non_referable' },
};

export const UPLOAD_COMPLETE: UploadComplete = {
  study_id: 'study-1',
  image_id: 'img-1',
  status: 'complete',
  result: COMPLETE_RESULT,
};

export const UPLOAD_AWAITING: UploadAwaitingMd = {
  study_id: 'study-1',
  image_id: 'img-2',
  status: 'awaiting_md_decision',
  reason: 'low_quality',
  stages: [
    { stage: 'preprocess', output: { scale: 1.0 }, decision: 'standardized' },
    { stage: 'MQ', output: { label: 0, score: 0.1 }, decision: 'fail' },
    { stage: 'MA', output: {}, decision: 'pass' },
  ],
};

/** Captured verbatim from the service's embedded reference scenario. */
export const EXPERIMENT_1_REPORT: EvaluationReport = {
  scenario: { name: 'experiment-1', unit: 'patient', scheme: 'RDR' },
  n_pairs: 797,
  notes: { headline_f1: 'f1_negative' },
  confusion: { tp: 49, tn: 715, fp: 28, fn: 5 },
  metrics: {
    accuracy: { numerator: 764, denominator: 797, value: 0.958594730238394, percent: 96 },
    ppv: { numerator: 7, denominator: 11, value: 0.6363636363636364, percent: 64 },
    npv: { numerator: 143, denominator: 144, value: 0.9930555555555556, percent: 99 },
    sensitivity: { numerator: 49, denominator: 54, value: 0.9074074074074074, percent: 91 },
    specificity: { numerator: 715, denominator: 743, value: 0.9623149394347241, percent: 96 },
    f1_positive: { numerator: 98, denominator: 131, value: 0.7480916030534351, percent: 75 },
    f1_negative: { numerator: 130, denominator: 133, value: 0.9774436090225563, percent: 98 },
    f1_macro: { numerator: 15032, denominator: 17423, value: 0.8627676060379957, percent: 86 },
  },
};
