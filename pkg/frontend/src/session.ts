import { ApiError, ServiceClient } from './api.js';
import {
  GRADES,
  type EvaluationReport,
  type FeedbackEntry,
  type MdDecision,
  type Role,
  type ScreeningResult,
  type StageRecord,
  type UploadResponse,
} from './types.js';

/** A console operation was attempted in a state that forbids it. */
export class ConsoleStateError extends Error {
  constructor(message: string) {
    super(message);
    this.name = 'ConsoleStateError';
  }
}

/** Client-side input validation failed; nothing was sent. */
export class ValidationError extends Error {
  constructor(message: string) {
    super(message);
    this.name = 'ValidationError';
  }
}

export interface MdPrompt {
  imageId: string;
  reason: string;
  stages: StageRecord[];
}

/** What the trace panel shows for one uploaded image. */
export type StageView =
  | { kind: 'complete'; result: ScreeningResult }
  | { kind: 'awaiting_md'; prompt: MdPrompt }
  | { kind: 'error'; message: string; stages: StageRecord[] };

export interface ReviewDraft {
  imageId: string;
  reviewer: string;
  grade: string;
  quality?: string;
  note?: string;
}

/**
 * Per-browser-session state for both console roles.
 *
 * All numbers and decisions shown in the console come from service
 * responses; this class only sequences calls and enforces the client-side
 * rules: one active study, one upload in flight, one answer per decision
 * prompt, and validated review drafts. State lives in memory only.
 */
export class ConsoleSession {
  readonly role: Role;
  private readonly client: ServiceClient;
  private studyId: string | null = null;
  private readonly pendingPrompts = new Map<string, MdPrompt>();
  private readonly answeredPrompts = new Set<string>();
  private readonly results = new Map<string, StageView>();
  private uploadInFlight = false;
  private reviewInFlight = false;

  constructor(client: ServiceClient, role: Role) {
    this.client = client;
    this.role = role;
  }

  get activeStudyId(): string | null {
    return this.studyId;
  }

  get isUploadInFlight(): boolean {
    return this.uploadInFlight;
  }

  get isReviewInFlight(): boolean {
    return this.reviewInFlight;
  }

  pendingPrompt(imageId: string): MdPrompt | undefined {
    return this.pendingPrompts.get(imageId);
  }

  resultView(imageId: string): StageView | undefined {
    return this.results.get(imageId);
  }

  private requireStudy(): string {
    if (this.studyId === null) {
      throw new ConsoleStateError('no active study; open one first');
    }
    return this.studyId;
  }

  async openStudy(): Promise<string> {
    if (this.studyId !== null) {
      throw new ConsoleStateError(
        `study ${this.studyId} is already active; close it before opening another`
      );
    }
    const created = await this.client.createStudy();
    this.studyId = created.study_id;
    return created.study_id;
  }

  async closeStudy(): Promise<void> {
    const studyId = this.requireStudy();
    await this.client.closeStudy(studyId);
    this.studyId = null;
    this.pendingPrompts.clear();
  }

  /** Fold an upload or md-decision response into the session caches. */
  private absorb(response: UploadResponse): StageView {
    if (response.status === 'awaiting_md_decision') {
      const prompt: MdPrompt = {
        imageId: response.image_id,
        reason: response.reason,
        stages: response.stages,
      };
      // a fresh prompt (new acquisition attempt) is answerable again
      this.answeredPrompts.delete(response.image_id);
      this.pendingPrompts.set(response.image_id, prompt);
      const view: StageView = { kind: 'awaiting_md', prompt };
      this.results.set(response.image_id, view);
      return view;
    }
    const view: StageView = { kind: 'complete', result: response.result };
    this.results.set(response.image_id, view);
    return view;
  }

  /**
   * Upload one image and return the rendered-state for it. Failures become
   * an error view (no disposition) rather than an exception so the trace
   * panel can show them inline.
   */
  async screenImage(
    imagePngBase64: string,
    metadata?: Record<string, string>
  ): Promise<StageView> {
    const studyId = this.requireStudy();
    if (this.uploadInFlight) {
      throw new ConsoleStateError('an upload is already in flight for this study');
    }
    this.uploadInFlight = true;
    try {
      const response = await this.client.uploadImage(studyId, imagePngBase64, metadata);
      return this.absorb(response);
    } catch (err) {
      if (err instanceof ApiError) {
        return { kind: 'error', message: `${err.code}: ${err.detail}`, stages: [] };
      }
      const message = err instanceof Error ? err.message : String(err);
      return { kind: 'error', message: `service unreachable: ${message}`, stages: [] };
    } finally {
      this.uploadInFlight = false;
    }
  }

  /**
   * Answer the modal decision prompt for an image. Each prompt accepts
   * exactly one answer; a second attempt is rejected before any request
   * is made.
   */
  async answerMdPrompt(imageId: string, decision: MdDecision): Promise<StageView> {
    const studyId = this.requireStudy();
    const prompt = this.pendingPrompts.get(imageId);
    if (prompt === undefined) {
      if (this.answeredPrompts.has(imageId)) {
        throw new ConsoleStateError(
          `the decision prompt for ${imageId} was already answered`
        );
      }
      throw new ConsoleStateError(`no pending decision prompt for ${imageId}`);
    }
    const response = await this.client.submitMdDecision(studyId, imageId, decision);
    this.pendingPrompts.delete(imageId);
    this.answeredPrompts.add(imageId);
    return this.absorb(response);
  }

  /** Pull the study's server-side results into the local cache. */
  async refreshResults(): Promise<void> {
    const studyId = this.requireStudy();
    const listing = await this.client.listResults(studyId);
    for (const entry of listing.results) {
      if (entry.result !== null) {
        this.results.set(entry.image_id, { kind: 'complete', result: entry.result });
      } else if (entry.status === 'awaiting_md_decision') {
        const prompt: MdPrompt = {
          imageId: entry.image_id,
          reason: entry.pending_reason ?? '',
          stages: [],
        };
        this.pendingPrompts.set(entry.image_id, prompt);
        this.results.set(entry.image_id, { kind: 'awaiting_md', prompt });
      }
    }
  }

  /**
   * Submit an expert review. The draft is validated locally first: an
   * empty reviewer or grade never leaves the browser, and only one
   * submission may be in flight at a time.
   */
  async submitReview(draft: ReviewDraft): Promise<{ feedback_id: string }> {
    const studyId = this.requireStudy();
    if (this.reviewInFlight) {
      throw new ConsoleStateError('a review submission is already in flight');
    }
    const view = this.results.get(draft.imageId);
    if (view === undefined || view.kind !== 'complete') {
      throw new ConsoleStateError(
        `no screening result is visible for ${draft.imageId}`
      );
    }
    const reviewer = draft.reviewer.trim();
    const grade = draft.grade.trim();
    if (reviewer === '') {
      throw new ValidationError('reviewer is required');
    }
    if (grade === '') {
      throw new ValidationError('a suggested grade is required');
    }
    if (!(GRADES as readonly string[]).includes(grade)) {
      throw new ValidationError(`grade must be one of ${GRADES.join(', ')}`);
    }
    this.reviewInFlight = true;
    try {
      return await this.client.submitFeedback({
        study_id: studyId,
        image_id: draft.imageId,
        reviewer,
        grade,
        quality: draft.quality ?? null,
        note: draft.note ?? '',
      });
    } finally {
      this.reviewInFlight = false;
    }
  }

  /** Stored reviews for one image, in insertion order, verbatim. */
  async feedbackFor(imageId: string): Promise<FeedbackEntry[]> {
    const listing = await this.client.listFeedback({ image_id: imageId });
    return listing.feedback;
  }

  /** Fetch one scenario's evaluation report; rendered as received. */
  async fetchEvaluation(scenario: string): Promise<EvaluationReport> {
    return this.client.evaluationReport(scenario);
  }
}
