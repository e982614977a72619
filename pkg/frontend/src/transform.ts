// Screen-space view transform. Zoom and pan only ever change how stored
// image coordinates are displayed; they never touch the coordinates
// themselves.

export interface ViewTransform {
  zoom: number;
  panX: number;
  panY: number;
}

export interface Point {
  x: number;
  y: number;
}

export const IDENTITY: ViewTransform = { zoom: 1, panX: 0, panY: 0 };

export function toScreen(t: ViewTransform, image: Point): Point {
  return { x: image.x * t.zoom + t.panX, y: image.y * t.zoom + t.panY };
}

export function toImage(t: ViewTransform, screen: Point): Point {
  return { x: (screen.x - t.panX) / t.zoom, y: (screen.y - t.panY) / t.zoom };
}

/** Zoom by `factor` keeping the screen point `anchor` over the same image point. */
export function zoomAt(t: ViewTransform, anchor: Point, factor: number): ViewTransform {
  const zoom = Math.min(32, Math.max(1 / 32, t.zoom * factor));
  const applied = zoom / t.zoom;
  return {
    zoom,
    panX: anchor.x - (anchor.x - t.panX) * applied,
    panY: anchor.y - (anchor.y - t.panY) * applied,
  };
}

export function panBy(t: ViewTransform, dx: number, dy: number): ViewTransform {
  return { zoom: t.zoom, panX: t.panX + dx, panY: t.panY + dy };
}

/** Store convention: handles land on integer pixels when saved. */
export function snapToIntegerPixels(p: Point): Point {
  return { x: Math.round(p.x), y: Math.round(p.y) };
}
