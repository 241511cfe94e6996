import type {
  EvaluationReport,
  FairnessBlock,
  FeedbackEntry,
  MetricCell,
  ScreeningResult,
} from './types.js';
import type { MdPrompt, StageView } from './session.js';

/**
 * Pure HTML formatters. Every number comes from a service payload; these
 * functions only decide where it goes on the page. Keeping them free of
 * DOM access makes the rendering testable as plain strings.
 */

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;')
    .replace(/'/g, '&#39;');
}

function percentCell(cell: MetricCell | null | undefined): string {
  return cell == null ? 'NA' : String(cell.percent);
}

function ratioText(cell: { value: number } | null): string {
  return cell === null ? 'NA' : cell.value.toFixed(3);
}

const QUOTED_ORDER = ['sensitivity', 'specificity', 'ppv', 'npv', 'accuracy'] as const;

/**
 * One-line summary in the published shape: headline F1 first, then
 * (sensitivity, specificity, ppv, npv, accuracy), all integer percents.
 */
export function renderQuotedSummary(report: EvaluationReport): string {
  const headline = percentCell(report.metrics[report.notes.headline_f1]);
  const cells = QUOTED_ORDER.map((name) => percentCell(report.metrics[name]));
  return `${headline}; (${cells.join(', ')})`;
}

export function renderMetricsRow(report: EvaluationReport): string {
  const headline = percentCell(report.metrics[report.notes.headline_f1]);
  const cells = QUOTED_ORDER.map(
    (name) => `<td class="metric-${name}">${percentCell(report.metrics[name])}</td>`
  );
  return (
    `<tr class="metrics-row" data-scenario="${escapeHtml(report.scenario.name)}">` +
    `<td class="metric-headline-f1">${headline}</td>${cells.join('')}</tr>`
  );
}

function groupLabel(selector: string | string[]): string {
  return Array.isArray(selector) ? selector.join('+') : selector;
}

export function renderFairnessRow(block: FairnessBlock): string {
  const flagClass =
    block.four_fifths === 'fail'
      ? 'fairness-row flag-fail'
      : block.four_fifths === 'undefined'
        ? 'fairness-row flag-undefined'
        : 'fairness-row flag-pass';
  const overlap = block.overlap_flag ? ' <span class="overlap-mark">overlap</span>' : '';
  return (
    `<tr class="${flagClass}">` +
    `<td>${escapeHtml(block.attribute)}</td>` +
    `<td>${escapeHtml(groupLabel(block.unprivileged))} vs ` +
    `${escapeHtml(groupLabel(block.privileged))}${overlap}</td>` +
    `<td class="cell-di">${ratioText(block.di)}</td>` +
    `<td class="cell-eod0">${ratioText(block.eod_0)}</td>` +
    `<td class="cell-eod1">${ratioText(block.eod_1)}</td>` +
    `<td class="cell-flag">${block.four_fifths}</td></tr>`
  );
}

const METRIC_HEAD =
  '<tr><th>F1</th><th>Sens</th><th>Spec</th><th>PPV</th><th>NPV</th><th>Acc</th></tr>';

const FAIRNESS_HEAD =
  '<tr><th>Attribute</th><th>Groups</th><th>DI</th><th>EOD_0</th><th>EOD_1</th>' +
  '<th>Four-fifths</th></tr>';

/** Dashboard body for one scenario; an explicit empty state when no data. */
export function renderDashboard(report: EvaluationReport | null): string {
  if (report === null || report.n_pairs === 0) {
    return '<p class="empty-state">No evaluation data for this scenario.</p>';
  }
  const parts = [
    `<h3>${escapeHtml(report.scenario.name)} ` +
      `(${escapeHtml(report.scenario.unit)} / ${escapeHtml(report.scenario.scheme)}, ` +
      `${report.n_pairs} pairs)</h3>`,
    `<p class="quoted-summary">${renderQuotedSummary(report)}</p>`,
    `<table class="metrics-table">${METRIC_HEAD}${renderMetricsRow(report)}</table>`,
  ];
  if (report.roc) {
    parts.push(`<p class="auc-line">AUC ${report.roc.auc.value.toFixed(4)}</p>`);
  }
  if (report.fairness) {
    parts.push(
      `<table class="fairness-table">${FAIRNESS_HEAD}${renderFairnessRow(report.fairness)}</table>`
    );
  }
  return parts.join('\n');
}

function stageRows(stages: { stage: string; decision: string }[]): string {
  return stages
    .map(
      (s) =>
        `<tr class="stage-row"><td>${escapeHtml(s.stage)}</td>` +
        `<td>${escapeHtml(s.decision)}</td></tr>`
    )
    .join('');
}

export function renderMdPrompt(prompt: MdPrompt): string {
  return (
    '<div class="md-modal" role="dialog">' +
    `<p>Gate failed for ${escapeHtml(prompt.imageId)}: ` +
    `${escapeHtml(prompt.reason)}. Retake the image?</p>` +
    `<button class="md-retake" data-image="${escapeHtml(prompt.imageId)}">Retake</button>` +
    `<button class="md-proceed" data-image="${escapeHtml(prompt.imageId)}">` +
    'Proceed ungradable</button></div>'
  );
}

/** Trace panel for one upload: stages, then disposition or prompt or error. */
export function renderStageTrace(view: StageView): string {
  if (view.kind === 'error') {
    return (
      '<div class="trace trace-error">' +
      `<table class="stage-table">${stageRows(view.stages)}</table>` +
      `<p class="stage-error">${escapeHtml(view.message)}</p></div>`
    );
  }
  if (view.kind === 'awaiting_md') {
    return (
      '<div class="trace trace-awaiting">' +
      `<table class="stage-table">${stageRows(view.prompt.stages)}</table>` +
      renderMdPrompt(view.prompt) +
      '</div>'
    );
  }
  const r = view.result;
  const grades = r.grades.length > 0 ? r.grades.join(', ') : 'none';
  return (
    '<div class="trace trace-complete">' +
    `<table class="stage-table">${stageRows(r.stages)}</table>` +
    `<p class="disposition disposition-${escapeHtml(r.disposition)}">` +
    `${escapeHtml(r.disposition)}</p>` +
    `<p class="grades">grades: ${escapeHtml(grades)}</p>` +
    `<p class="referral">RDR ${escapeHtml(r.referral.RDR)} / ` +
    `ACR ${escapeHtml(r.referral.ACR)}</p></div>`
  );
}

/**
 * Reviewer panel: the system output stays on the left, stored suggestions
 * on the right. Feedback never replaces the system grade.
 */
export function renderReviewPanel(
  result: ScreeningResult,
  feedback: FeedbackEntry[]
): string {
  const systemGrades = result.grades.length > 0 ? result.grades.join(', ') : 'none';
  const suggestions =
    feedback.length === 0
      ? '<p class="no-feedback">No reviews yet.</p>'
      : feedback
          .map(
            (f) =>
              `<li class="feedback-entry" data-id="${escapeHtml(f.feedback_id)}">` +
              `${escapeHtml(f.reviewer)} suggests ${escapeHtml(f.grade)}` +
              (f.quality ? ` (quality ${escapeHtml(f.quality)})` : '') +
              (f.note ? `: ${escapeHtml(f.note)}` : '') +
              '</li>'
          )
          .join('');
  const list = feedback.length === 0 ? suggestions : `<ul>${suggestions}</ul>`;
  return (
    '<div class="review-panel">' +
    `<div class="system-side"><h4>System</h4>` +
    `<p class="system-grades">grades: ${escapeHtml(systemGrades)}</p>` +
    `<p class="system-disposition">${escapeHtml(result.disposition)}</p></div>` +
    `<div class="review-side"><h4>Reviews</h4>${list}</div></div>`
  );
}
