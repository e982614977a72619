// Rater comparison: overlay geometry and the per-parameter delta table.
// Deltas subtract parameter values the service computed; a parameter
// missing on either side stays blank rather than becoming zero.

import type {
  AnnotationRecordWire,
  LandmarkName,
  ParameterLabel,
  ParametersWire,
} from './types.js';
import { LANDMARK_ORDER, PARAMETER_ORDER } from './types.js';

export interface DeltaRow {
  parameter: ParameterLabel;
  a: number | null;
  b: number | null;
  delta: number | null;
}

export function parameterDeltas(a: ParametersWire, b: ParametersWire): DeltaRow[] {
  return PARAMETER_ORDER.map((parameter) => {
    const va = a[parameter];
    const vb = b[parameter];
    return {
      parameter,
      a: va,
      b: vb,
      delta: va !== null && vb !== null ? va - vb : null,
    };
  });
}

export interface OverlaySegment {
  name: LandmarkName;
  ax: number;
  ay: number;
  bx: number;
  by: number;
}

/** Connecting segments between same-name visible keypoints of two raters. */
export function overlaySegments(
  a: AnnotationRecordWire,
  b: AnnotationRecordWire,
): OverlaySegment[] {
  const byName = new Map(b.keypoints.filter((kp) => kp.visible)
    .map((kp) => [kp.name, kp]));
  const segments: OverlaySegment[] = [];
  for (const name of LANDMARK_ORDER) {
    const ka = a.keypoints.find((kp) => kp.name === name && kp.visible);
    const kb = byName.get(name);
    if (ka && kb) {
      segments.push({ name, ax: ka.x_px, ay: ka.y_px, bx: kb.x_px, by: kb.y_px });
    }
  }
  return segments;
}

export interface CompareModel {
  ok: boolean;
  missingRater: string | null;
  raterA: string;
  raterB: string;
  deltas: DeltaRow[];
  segments: OverlaySegment[];
}

export function buildCompareModel(
  raterA: string,
  raterB: string,
  recordA: AnnotationRecordWire | null,
  recordB: AnnotationRecordWire | null,
  paramsA: ParametersWire | null,
  paramsB: ParametersWire | null,
): CompareModel {
  if (!recordA || !recordB || !paramsA || !paramsB) {
    return {
      ok: false,
      missingRater: !recordA ? raterA : !recordB ? raterB : null,
      raterA,
      raterB,
      deltas: [],
      segments: [],
    };
  }
  return {
    ok: true,
    missingRater: null,
    raterA,
    raterB,
    deltas: parameterDeltas(paramsA, paramsB),
    segments: overlaySegments(recordA, recordB),
  };
}
