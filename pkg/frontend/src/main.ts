import { ServiceClient } from './api.js';
import { ConsoleSession, ConsoleStateError, ValidationError } from './session.js';
import { renderDashboard, renderReviewPanel, renderStageTrace } from './views.js';

/**
 * Browser wiring: DOM events in, session calls out, rendered HTML back in.
 * All state lives in the ConsoleSession; nothing is persisted locally.
 */

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

function setStatus(text: string): void {
  el<HTMLElement>('status-line').textContent = text;
}

async function fileToBase64(file: File): Promise<string> {
  const buffer = await file.arrayBuffer();
  const bytes = new Uint8Array(buffer);
  let binary = '';
  for (const b of bytes) {
    binary += String.fromCharCode(b);
  }
  return btoa(binary);
}

export function bootstrap(): void {
  const client = new ServiceClient({ baseUrl: window.location.origin });
  const session = new ConsoleSession(client, 'technician');

  const openButton = el<HTMLButtonElement>('open-study');
  const closeButton = el<HTMLButtonElement>('close-study');
  const fileInput = el<HTMLInputElement>('image-file');
  const uploadButton = el<HTMLButtonElement>('upload-image');
  const tracePanel = el<HTMLElement>('trace-panel');
  const reviewPanel = el<HTMLElement>('review-panel');
  const reviewForm = el<HTMLFormElement>('review-form');
  const reviewSubmit = el<HTMLButtonElement>('review-submit');
  const scenarioSelect = el<HTMLSelectElement>('scenario-select');
  const dashboard = el<HTMLElement>('dashboard-panel');

  let currentImageId: string | null = null;

  const wireMdButtons = (): void => {
    for (const button of tracePanel.querySelectorAll<HTMLButtonElement>(
      '.md-retake, .md-proceed'
    )) {
      button.addEventListener('click', () => {
        const imageId = button.dataset['image'];
        if (!imageId) {
          return;
        }
        const decision = button.classList.contains('md-retake')
          ? ('retake' as const)
          : ('proceed_ungradable' as const);
        // one answer per prompt: both buttons go dead immediately
        for (const b of tracePanel.querySelectorAll('button')) {
          (b as HTMLButtonElement).disabled = true;
        }
        session
          .answerMdPrompt(imageId, decision)
          .then((view) => {
            tracePanel.innerHTML = renderStageTrace(view);
            setStatus(`decision recorded for ${imageId}`);
          })
          .catch((err) => setStatus(String(err)));
      });
    }
  };

  openButton.addEventListener('click', () => {
    session
      .openStudy()
      .then((studyId) => setStatus(`study ${studyId} open`))
      .catch((err) => setStatus(String(err)));
  });

  closeButton.addEventListener('click', () => {
    session
      .closeStudy()
      .then(() => setStatus('study closed'))
      .catch((err) => setStatus(String(err)));
  });

  uploadButton.addEventListener('click', async () => {
    const file = fileInput.files?.[0];
    if (!file) {
      setStatus('choose a PNG first');
      return;
    }
    uploadButton.disabled = true; // single upload in flight
    try {
      const encoded = await fileToBase64(file);
      const view = await session.screenImage(encoded);
      tracePanel.innerHTML = renderStageTrace(view);
      if (view.kind === 'awaiting_md') {
        currentImageId = view.prompt.imageId;
        wireMdButtons();
      } else if (view.kind === 'complete') {
        currentImageId = view.result.image_id;
      }
      setStatus(view.kind === 'error' ? view.message : `screened ${currentImageId}`);
    } catch (err) {
      setStatus(String(err));
    } finally {
      uploadButton.disabled = false;
    }
  });

  reviewForm.addEventListener('submit', (event) => {
    event.preventDefault();
    if (currentImageId === null) {
      setStatus('screen an image before reviewing it');
      return;
    }
    const data = new FormData(reviewForm);
    const draft = {
      imageId: currentImageId,
      reviewer: String(data.get('reviewer') ?? ''),
      grade: String(data.get('grade') ?? ''),
      quality: String(data.get('quality') ?? '') || undefined,
      note: String(data.get('note') ?? '') || undefined,
    };
    reviewSubmit.disabled = true; // double-submit guard
    session
      .submitReview(draft)
      .then(async (saved) => {
        setStatus(`review ${saved.feedback_id} stored`);
        const view = session.resultView(draft.imageId);
        if (view !== undefined && view.kind === 'complete') {
          const feedback = await session.feedbackFor(draft.imageId);
          reviewPanel.innerHTML = renderReviewPanel(view.result, feedback);
        }
      })
      .catch((err) => {
        if (err instanceof ValidationError || err instanceof ConsoleStateError) {
          setStatus(err.message);
        } else {
          setStatus(String(err));
        }
      })
      .finally(() => {
        reviewSubmit.disabled = false;
      });
  });

  scenarioSelect.addEventListener('change', () => {
    const scenario = scenarioSelect.value;
    if (!scenario) {
      dashboard.innerHTML = renderDashboard(null);
      return;
    }
    session
      .fetchEvaluation(scenario)
      .then((report) => {
        dashboard.innerHTML = renderDashboard(report);
      })
      .catch((err) => {
        dashboard.innerHTML = renderDashboard(null);
        setStatus(String(err));
      });
  });
}

if (typeof document !== 'undefined' && document.getElementById('status-line') !== null) {
  bootstrap();
}
