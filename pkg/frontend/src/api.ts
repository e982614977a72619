// HTTP client for the review service. The fetch implementation is
// injectable so the client is testable without a browser or a server.

import type {
  AnnotationEnvelope,
  AnnotationRecordWire,
  KeypointSetWire,
  ParametersWire,
  ReportWire,
  ServiceErrorBody,
  StudySummaryWire,
} from './types.js';

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly errorName: string,
    readonly detail: unknown,
  ) {
    super(`${errorName} (${status})`);
  }
}

export class RevisionConflictError extends ApiError {
  constructor(status: number, detail: unknown) {
    super(status, 'RevisionConflict', detail);
  }
}

async function raiseFor(response: Response): Promise<never> {
  let body: ServiceErrorBody = { error: `HTTP ${response.status}`, detail: null };
  try {
    body = (await response.json()) as ServiceErrorBody;
  } catch {
    // non-JSON error body; keep the status-based description
  }
  if (response.status === 409) {
    throw new RevisionConflictError(response.status, body.detail);
  }
  throw new ApiError(response.status, body.error, body.detail);
}

export interface ReportResponse {
  report: ReportWire;
  /** exact bytes the service sent, for verbatim display and parity checks */
  raw: string;
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, '') + path;
  }

  async listStudies(): Promise<StudySummaryWire[]> {
    const response = await this.fetchImpl(this.url('/studies'));
    if (!response.ok) await raiseFor(response);
    return (await response.json()) as StudySummaryWire[];
  }

  imageUrl(studyId: string): string {
    return this.url(`/studies/${encodeURIComponent(studyId)}/image`);
  }

  async getAnnotation(studyId: string, raterId: string): Promise<AnnotationEnvelope> {
    const response = await this.fetchImpl(this.url(
      `/studies/${encodeURIComponent(studyId)}/annotations/${encodeURIComponent(raterId)}`));
    if (!response.ok) await raiseFor(response);
    return (await response.json()) as AnnotationEnvelope;
  }

  async putAnnotation(
    studyId: string,
    raterId: string,
    record: AnnotationRecordWire,
    expectedRevision: number,
  ): Promise<number> {
    const response = await this.fetchImpl(this.url(
      `/studies/${encodeURIComponent(studyId)}/annotations/${encodeURIComponent(raterId)}`), {
      method: 'PUT',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify({ record, expected_revision: expectedRevision }),
    });
    if (!response.ok) await raiseFor(response);
    const body = (await response.json()) as { revision: number };
    return body.revision;
  }

  async compute(set: KeypointSetWire): Promise<ParametersWire> {
    const response = await this.fetchImpl(this.url('/compute'), {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(set),
    });
    if (!response.ok) await raiseFor(response);
    return (await response.json()) as ParametersWire;
  }

  async cohortReport(pred: string, gt: string): Promise<ReportResponse> {
    const query = `pred=${encodeURIComponent(pred)}&gt=${encodeURIComponent(gt)}`;
    const response = await this.fetchImpl(this.url(`/cohort/report?${query}`));
    if (!response.ok) await raiseFor(response);
    const raw = await response.text();
    return { report: JSON.parse(raw) as ReportWire, raw };
  }
}
