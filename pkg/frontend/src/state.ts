// Annotation session state machine: the canvas view drives it with drag
// events and it talks to the service. Every number shown in the parameter
// panel comes from a /compute response; drags are subpixel on screen and
// snap to integer pixels only when saved.

import { ApiClient, ApiError, RevisionConflictError } from './api.js';
import type {
  AnnotationRecordWire,
  KeypointSetWire,
  KeypointWire,
  LandmarkName,
  ParameterLabel,
  ParametersWire,
} from './types.js';
import { PARAMETER_REQUIREMENTS } from './types.js';
import { snapToIntegerPixels, type ViewTransform, IDENTITY } from './transform.js';

export interface Scheduler {
  set(fn: () => void, ms: number): number;
  clear(id: number): void;
}

const realScheduler: Scheduler = {
  set: (fn, ms) => setTimeout(fn, ms) as unknown as number,
  clear: (id) => clearTimeout(id),
};

export interface FieldError {
  field: string;
  message: string;
}

export interface CanvasState {
  transform: ViewTransform;
  activeRater: string | null;
  draggingLandmark: LandmarkName | null;
  dirty: boolean;
  lastParameters: ParametersWire | null;
  /** parameters currently not computable, with the landmarks blocking them */
  blocked: Partial<Record<ParameterLabel, LandmarkName[]>>;
  conflict: { serverRevision: number | null } | null;
  fieldErrors: FieldError[];
  revision: number;
}

export interface SessionEvents {
  onParameters?(params: ParametersWire | null): void;
  onDirty?(dirty: boolean): void;
  onConflict?(): void;
  onFieldErrors?(errors: FieldError[]): void;
  onKeypointsChanged?(): void;
}

/** Debounce window for live recomputation during drags. */
export const COMPUTE_DEBOUNCE_MS = 100;

export class AnnotationSession {
  readonly state: CanvasState = {
    transform: IDENTITY,
    activeRater: null,
    draggingLandmark: null,
    dirty: false,
    lastParameters: null,
    blocked: {},
    conflict: null,
    fieldErrors: [],
    revision: 0,
  };

  private record: AnnotationRecordWire | null = null;
  private debounceId: number | null = null;
  private computeSequence = 0;

  constructor(
    private readonly api: ApiClient,
    private readonly events: SessionEvents = {},
    private readonly scheduler: Scheduler = realScheduler,
    private readonly debounceMs: number = COMPUTE_DEBOUNCE_MS,
  ) {}

  get currentRecord(): AnnotationRecordWire | null {
    return this.record;
  }

  async load(studyId: string, raterId: string): Promise<void> {
    const envelope = await this.api.getAnnotation(studyId, raterId);
    this.record = envelope.record;
    this.state.revision = envelope.revision;
    this.state.activeRater = raterId;
    this.state.dirty = false;
    this.state.conflict = null;
    this.state.fieldErrors = [];
    this.events.onDirty?.(false);
    this.events.onKeypointsChanged?.();
    await this.recompute();
  }

  keypoint(name: LandmarkName): KeypointWire | undefined {
    return this.record?.keypoints.find((kp) => kp.name === name);
  }

  private keypointSet(): KeypointSetWire | null {
    if (!this.record) return null;
    return {
      pixel_spacing_px_per_mm: this.record.image.pixel_spacing_px_per_mm,
      view: this.record.view,
      keypoints: this.record.keypoints,
    };
  }

  private refreshBlocked(): void {
    const visible = new Set(
      (this.record?.keypoints ?? [])
        .filter((kp) => kp.visible)
        .map((kp) => kp.name));
    const blocked: CanvasState['blocked'] = {};
    for (const [label, needs] of Object.entries(PARAMETER_REQUIREMENTS)) {
      const missing = needs.filter((name) => !visible.has(name));
      if (missing.length > 0) {
        blocked[label as ParameterLabel] = missing;
      }
    }
    this.state.blocked = blocked;
  }

  /** Ask the service for parameters; the latest response always wins. */
  async recompute(): Promise<void> {
    const set = this.keypointSet();
    if (!set) return;
    this.refreshBlocked();
    const sequence = ++this.computeSequence;
    try {
      const params = await this.api.compute(set);
      if (sequence === this.computeSequence) {
        this.state.lastParameters = params;
        this.events.onParameters?.(params);
      }
    } catch (error) {
      if (!(error instanceof ApiError)) throw error;
      if (sequence === this.computeSequence) {
        // incomplete or degenerate set: panel empties, blocked map explains
        this.state.lastParameters = null;
        this.events.onParameters?.(null);
      }
    }
  }

  private scheduleRecompute(): void {
    if (this.debounceId !== null) this.scheduler.clear(this.debounceId);
    this.debounceId = this.scheduler.set(() => {
      this.debounceId = null;
      void this.recompute();
    }, this.debounceMs);
  }

  beginDrag(name: LandmarkName): void {
    this.state.draggingLandmark = name;
  }

  /** Subpixel move during a drag; recomputation is debounced. */
  dragTo(name: LandmarkName, x: number, y: number): void {
    if (!this.record) return;
    const kp = this.keypoint(name);
    if (!kp) return;
    kp.x_px = x;
    kp.y_px = y;
    if (!this.state.dirty) {
      this.state.dirty = true;
      this.events.onDirty?.(true);
    }
    this.events.onKeypointsChanged?.();
    this.scheduleRecompute();
  }

  /** Drop ends the drag and always recomputes immediately. */
  async endDrag(name: LandmarkName): Promise<void> {
    if (this.state.draggingLandmark === name) {
      this.state.draggingLandmark = null;
    }
    if (this.debounceId !== null) {
      this.scheduler.clear(this.debounceId);
      this.debounceId = null;
    }
    await this.recompute();
  }

  /** PUT the record (integer-pixel snapped) under the current revision. */
  async save(): Promise<boolean> {
    if (!this.record || this.state.activeRater === null) return false;
    for (const kp of this.record.keypoints) {
      const snapped = snapToIntegerPixels({ x: kp.x_px, y: kp.y_px });
      kp.x_px = snapped.x;
      kp.y_px = snapped.y;
    }
    this.events.onKeypointsChanged?.();
    try {
      const revision = await this.api.putAnnotation(
        this.record.study_id, this.state.activeRater, this.record,
        this.state.revision);
      this.state.revision = revision;
      this.state.dirty = false;
      this.state.conflict = null;
      this.state.fieldErrors = [];
      this.events.onDirty?.(false);
      await this.recompute();
      return true;
    } catch (error) {
      if (error instanceof RevisionConflictError) {
        this.state.conflict = { serverRevision: null };
        this.events.onConflict?.();
        return false;
      }
      if (error instanceof ApiError && error.status === 422) {
        this.state.fieldErrors = Array.isArray(error.detail)
          ? (error.detail as FieldError[])
          : [{ field: '', message: String(error.detail) }];
        this.events.onFieldErrors?.(this.state.fieldErrors);
        return false;
      }
      throw error;
    }
  }

  /**
   * Conflict resolution: reload the server copy. With `keepLocalEdits` the
   * local keypoint positions are re-applied on top of the fresh revision
   * (the merge side of the reload-and-merge prompt).
   */
  async reload(keepLocalEdits: boolean): Promise<void> {
    if (!this.record || this.state.activeRater === null) return;
    const local = this.record;
    await this.load(local.study_id, this.state.activeRater);
    if (keepLocalEdits && this.record) {
      for (const kp of local.keypoints) {
        const target = this.keypoint(kp.name);
        if (target) {
          target.x_px = kp.x_px;
          target.y_px = kp.y_px;
          target.visible = kp.visible;
        }
      }
      this.state.dirty = true;
      this.events.onDirty?.(true);
      this.events.onKeypointsChanged?.();
      await this.recompute();
    }
  }

  setTransform(transform: ViewTransform): void {
    // display-space only; stored coordinates are untouched
    this.state.transform = transform;
  }
}
