// Interactive annotation canvas: draggable landmark handles with name
// labels, live parameter readout, zoom/pan (display-space only), and
// optimistic save with a reload-and-merge prompt on conflicts.

import { ApiClient } from './api.js';
import { AnnotationSession } from './state.js';
import {
  IDENTITY,
  panBy,
  toImage,
  toScreen,
  zoomAt,
  type ViewTransform,
} from './transform.js';
import type { LandmarkName, ParametersWire } from './types.js';
import { PARAMETER_ORDER, PARAMETER_UNITS } from './types.js';

const HANDLE_RADIUS = 6;

export class AnnotateView {
  private readonly session: AnnotationSession;
  private readonly canvas: HTMLCanvasElement;
  private readonly panel: HTMLElement;
  private readonly status: HTMLElement;
  private image: HTMLImageElement | null = null;
  private dragging: LandmarkName | null = null;
  private panning: { x: number; y: number } | null = null;

  constructor(
    private readonly api: ApiClient,
    private readonly root: HTMLElement,
    private readonly studyId: string,
    private readonly raterId: string,
  ) {
    root.innerHTML = `
      <div class="annotate-layout">
        <div class="canvas-wrap"><canvas width="760" height="900"></canvas></div>
        <aside>
          <h2>${studyId} / ${raterId}</h2>
          <table class="parameters"><tbody></tbody></table>
          <div class="blocked"></div>
          <div class="errors"></div>
          <button class="save">Save</button>
          <span class="status"></span>
          <div class="conflict" hidden>
            Another revision was saved meanwhile.
            <button class="reload-merge">Reload + keep my edits</button>
            <button class="reload-discard">Reload server copy</button>
          </div>
        </aside>
      </div>`;
    this.canvas = root.querySelector('canvas')!;
    this.panel = root.querySelector('.parameters tbody')!;
    this.status = root.querySelector('.status')!;
    this.session = new AnnotationSession(api, {
      onParameters: (params) => this.renderParameters(params),
      onDirty: (dirty) => {
        this.status.textContent = dirty ? 'unsaved changes' : 'saved';
      },
      onConflict: () => {
        (root.querySelector('.conflict') as HTMLElement).hidden = false;
      },
      onFieldErrors: (errors) => {
        (root.querySelector('.errors') as HTMLElement).innerHTML = errors
          .map((e) => `<p class="field-error">${e.field}: ${e.message}</p>`)
          .join('');
      },
      onKeypointsChanged: () => this.draw(),
    });
    this.wireEvents();
  }

  async start(): Promise<void> {
    this.image = new Image();
    this.image.src = this.api.imageUrl(this.studyId);
    await new Promise((resolve) => {
      this.image!.onload = resolve;
      this.image!.onerror = resolve; // annotations work without pixels
    });
    await this.session.load(this.studyId, this.raterId);
    this.draw();
  }

  private get transform(): ViewTransform {
    return this.session.state.transform;
  }

  private wireEvents(): void {
    const saveButton = this.root.querySelector('.save') as HTMLButtonElement;
    saveButton.addEventListener('click', () => void this.session.save());
    (this.root.querySelector('.reload-merge') as HTMLButtonElement)
      .addEventListener('click', () => {
        (this.root.querySelector('.conflict') as HTMLElement).hidden = true;
        void this.session.reload(true);
      });
    (this.root.querySelector('.reload-discard') as HTMLButtonElement)
      .addEventListener('click', () => {
        (this.root.querySelector('.conflict') as HTMLElement).hidden = true;
        void this.session.reload(false);
      });

    this.canvas.addEventListener('wheel', (event) => {
      event.preventDefault();
      const anchor = this.eventPoint(event);
      const factor = event.deltaY < 0 ? 1.15 : 1 / 1.15;
      this.session.setTransform(zoomAt(this.transform, anchor, factor));
      this.draw();
    });

    this.canvas.addEventListener('pointerdown', (event) => {
      const screen = this.eventPoint(event);
      const hit = this.hitTest(screen.x, screen.y);
      if (hit) {
        this.dragging = hit;
        this.session.beginDrag(hit);
        this.canvas.setPointerCapture(event.pointerId);
      } else {
        this.panning = screen;
      }
    });
    this.canvas.addEventListener('pointermove', (event) => {
      const screen = this.eventPoint(event);
      if (this.dragging) {
        const image = toImage(this.transform, screen);
        this.session.dragTo(this.dragging, image.x, image.y);
      } else if (this.panning) {
        this.session.setTransform(panBy(this.transform,
          screen.x - this.panning.x, screen.y - this.panning.y));
        this.panning = screen;
        this.draw();
      }
    });
    this.canvas.addEventListener('pointerup', () => {
      if (this.dragging) {
        void this.session.endDrag(this.dragging);
        this.dragging = null;
      }
      this.panning = null;
    });
  }

  private eventPoint(event: MouseEvent): { x: number; y: number } {
    const rect = this.canvas.getBoundingClientRect();
    return { x: event.clientX - rect.left, y: event.clientY - rect.top };
  }

  private hitTest(x: number, y: number): LandmarkName | null {
    const record = this.session.currentRecord;
    if (!record) return null;
    for (const kp of record.keypoints) {
      if (!kp.visible) continue;
      const screen = toScreen(this.transform, { x: kp.x_px, y: kp.y_px });
      if (Math.hypot(screen.x - x, screen.y - y) <= HANDLE_RADIUS + 3) {
        return kp.name;
      }
    }
    return null;
  }

  private renderParameters(params: ParametersWire | null): void {
    const blocked = this.session.state.blocked;
    this.panel.innerHTML = PARAMETER_ORDER.map((label) => {
      const value = params ? params[label] : null;
      const text = value === null ? '-' : value.toFixed(1);
      return `<tr><th>${label}</th>`
        + `<td>${text} ${value === null ? '' : PARAMETER_UNITS[label]}</td></tr>`;
    }).join('');
    const blockedBox = this.root.querySelector('.blocked') as HTMLElement;
    const entries = Object.entries(blocked);
    blockedBox.innerHTML = entries.length === 0 ? '' : '<h3>Blocked</h3>'
      + entries.map(([label, missing]) =>
        `<p>${label}: missing ${(missing as string[]).join(', ')}</p>`).join('');
  }

  private draw(): void {
    const ctx = this.canvas.getContext('2d');
    if (!ctx) return;
    const t = this.transform === IDENTITY ? this.fitTransform() : this.transform;
    this.session.setTransform(t);
    ctx.clearRect(0, 0, this.canvas.width, this.canvas.height);
    if (this.image && this.image.complete && this.image.naturalWidth > 0) {
      ctx.save();
      ctx.setTransform(t.zoom, 0, 0, t.zoom, t.panX, t.panY);
      ctx.drawImage(this.image, 0, 0);
      ctx.restore();
    }
    const record = this.session.currentRecord;
    if (!record) return;
    ctx.font = '11px sans-serif';
    for (const kp of record.keypoints) {
      if (!kp.visible) continue;
      const screen = toScreen(t, { x: kp.x_px, y: kp.y_px });
      ctx.beginPath();
      ctx.arc(screen.x, screen.y, HANDLE_RADIUS, 0, 2 * Math.PI);
      ctx.fillStyle = kp.name === this.dragging ? '#ff9f1c' : '#2ec4b6';
      ctx.fill();
      ctx.strokeStyle = '#13343b';
      ctx.stroke();
      ctx.fillStyle = '#e8f1f2';
      ctx.fillText(kp.name, screen.x + 8, screen.y - 6);
    }
  }

  private fitTransform(): ViewTransform {
    const record = this.session.currentRecord;
    if (!record) return IDENTITY;
    const zoom = Math.min(
      this.canvas.width / record.image.width_px,
      this.canvas.height / record.image.height_px);
    return { zoom, panX: 0, panY: 0 };
  }
}
