// Shared test doubles: a manual-clock scheduler and a routing fake fetch
// that records every request so tests can assert on network traffic.

import type { Scheduler } from '../src/state.js';
import type {
  AnnotationRecordWire,
  KeypointWire,
  LandmarkName,
  ParametersWire,
} from '../src/types.js';

export class FakeScheduler implements Scheduler {
  now = 0;
  private nextId = 1;
  private tasks = new Map<number, { at: number; fn: () => void }>();

  set(fn: () => void, ms: number): number {
    const id = this.nextId++;
    this.tasks.set(id, { at: this.now + ms, fn });
    return id;
  }

  clear(id: number): void {
    this.tasks.delete(id);
  }

  advance(ms: number): void {
    this.now += ms;
    for (const [id, task] of [...this.tasks.entries()]) {
      if (task.at <= this.now) {
        this.tasks.delete(id);
        task.fn();
      }
    }
  }

  get pending(): number {
    return this.tasks.size;
  }
}

export const tick = (): Promise<void> =>
  new Promise((resolve) => setTimeout(resolve, 0));

export interface RecordedRequest {
  method: string;
  url: string;
  body: unknown;
}

export type RouteHandler = (request: RecordedRequest) =>
  | { status?: number; body: unknown }
  | Promise<{ status?: number; body: unknown }>;

export class FakeFetch {
  requests: RecordedRequest[] = [];
  private routes: Array<{ method: string; pattern: RegExp; handler: RouteHandler }> = [];

  on(method: string, pattern: RegExp, handler: RouteHandler): void {
    this.routes.push({ method, pattern, handler });
  }

  fetch = async (url: string, init?: RequestInit): Promise<Response> => {
    const method = init?.method ?? 'GET';
    const request: RecordedRequest = {
      method,
      url,
      body: init?.body ? JSON.parse(String(init.body)) : null,
    };
    this.requests.push(request);
    for (const route of this.routes) {
      if (route.method === method && route.pattern.test(url)) {
        const { status = 200, body } = await route.handler(request);
        return new Response(JSON.stringify(body), {
          status,
          headers: { 'content-type': 'application/json' },
        });
      }
    }
    return new Response(JSON.stringify({ error: 'NotFound', detail: url }),
      { status: 404 });
  };

  ofPath(fragment: string): RecordedRequest[] {
    return this.requests.filter((r) => r.url.includes(fragment));
  }
}

// A small whole-spine record fixture (raster values mirror the Python
// suite's hand-checkable configuration).

export const FIXTURE_POINTS: Record<LandmarkName, [number, number]> = {
  C7: [130, 10], T1: [108, 20],
  L1_ANT: [105, 30], L1_POST: [88, 32], L1_MID: [96, 45],
  S1_ANT: [110, 95], S1_POST: [90, 85],
  FEM_L: [120, 150], FEM_R: [124, 154],
};

export function fixtureKeypoints(): KeypointWire[] {
  return (Object.entries(FIXTURE_POINTS) as Array<[LandmarkName, [number, number]]>)
    .map(([name, [x, y]]) => ({ name, x_px: x, y_px: y, visible: true }));
}

export function fixtureRecord(): AnnotationRecordWire {
  return {
    schema_version: '1',
    study_id: 'S0001',
    rater_id: 'R1',
    source: 'HUMAN',
    image: {
      file_path: 'images/S0001.png',
      width_px: 200,
      height_px: 200,
      pixel_spacing_px_per_mm: 3.73,
    },
    view: 'WHOLE_SPINE',
    keypoints: fixtureKeypoints(),
    boxes: {},
    metadata: {
      spinal_instrumentation: false,
      brace: false,
      hip_arthroplasty: false,
      levels_instrumented: null,
      transitional_anatomy: false,
      diagnoses: [],
    },
  };
}

export function parametersWire(overrides: Partial<ParametersWire> = {}): ParametersWire {
  return {
    view: 'WHOLE_SPINE',
    SVA: 10.7, PT: 19.5, SS: 26.6, PI: 46.1, LL: 33.3, T1PA: 13.5, L1PA: 5.9,
    ...overrides,
  };
}
