import { describe, expect, it } from 'vitest';

import { ApiError } from '../src/api.js';
import { scriptedClient, UPLOAD_COMPLETE } from './helpers.js';

describe('ServiceClient', () => {
  it('posts study creation to the versioned path', async () => {
    const s = scriptedClient();
    s.push(201, { study_id: 'study-1', status: 'open' });
    const created = await s.client.createStudy();
    expect(created.study_id).toBe('study-1');
    expect(s.calls).toHaveLength(1);
    expect(s.calls[0]!.url).toBe('http://svc.test/v1/studies');
    expect(s.calls[0]!.method).toBe('POST');
  });

  it('trims trailing slashes off the base url', async () => {
    const s = scriptedClient();
    s.push(200, { status: 'ok' });
    await s.client.health();
    expect(s.calls[0]!.url).toBe('http://svc.test/v1/health');
  });

  it('sends a bearer token when configured', async () => {
    const s = scriptedClient('sekrit');
    s.push(200, { status: 'ok' });
    await s.client.health();
    expect(s.calls[0]!.headers['authorization']).toBe('Bearer sekrit');
  });

  it('sends no authorization header without a token', async () => {
    const s = scriptedClient();
    s.push(200, { status: 'ok' });
    await s.client.health();
    expect(s.calls[0]!.headers['authorization']).toBeUndefined();
  });

  it('uploads the png payload and optional metadata verbatim', async () => {
    const s = scriptedClient();
    s.push(201, UPLOAD_COMPLETE);
    await s.client.uploadImage('study-1', 'cGl4ZWxz', { image_id: 'named-1' });
    expect(s.calls[0]!.url).toBe('http://svc.test/v1/studies/study-1/images');
    expect(s.calls[0]!.body).toEqual({
      image_png_base64: 'cGl4ZWxz',
      metadata: { image_id: 'named-1' },
    });
  });

  it('omits the metadata key when none is given', async () => {
    const s = scriptedClient();
    s.push(201, UPLOAD_COMPLETE);
    await s.client.uploadImage('study-1', 'cGl4ZWxz');
    expect(s.calls[0]!.body).toEqual({ image_png_base64: 'cGl4ZWxz' });
  });

  it('posts md decisions to the image subresource', async () => {
    const s = scriptedClient();
    s.push(200, UPLOAD_COMPLETE);
    await s.client.submitMdDecision('study-1', 'img-2', 'retake');
    expect(s.calls[0]!.url).toBe(
      'http://svc.test/v1/studies/study-1/images/img-2/md-decision'
    );
    expect(s.calls[0]!.body).toEqual({ decision: 'retake' });
  });

  it('builds feedback list queries from the filter', async () => {
    const s = scriptedClient();
    s.push(200, { feedback: [] });
    await s.client.listFeedback({ study_id: 'study-1', image_id: 'img-1' });
    expect(s.calls[0]!.url).toBe(
      'http://svc.test/v1/feedback?study_id=study-1&image_id=img-1'
    );
  });

  it('url-encodes the report scenario parameter', async () => {
    const s = scriptedClient();
    s.push(200, {});
    await s.client.evaluationReport('experiment 1/x');
    expect(s.calls[0]!.url).toBe(
      'http://svc.test/v1/reports/evaluation?scenario=experiment%201%2Fx'
    );
  });

  it('maps error bodies onto ApiError fields', async () => {
    const s = scriptedClient();
    s.push(409, { error: 'duplicate_image', detail: 'already screened' });
    const err = await s.client.uploadImage('study-1', 'x').catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(409);
    expect(err.code).toBe('duplicate_image');
    expect(err.detail).toBe('already screened');
  });

  it('degrades to unknown_error when the error body is not json', async () => {
    const s = scriptedClient();
    s.push(502, 'NOT_JSON');
    const err = await s.client.health().catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.code).toBe('unknown_error');
    expect(err.detail).toBe('HTTP 502');
  });
});
