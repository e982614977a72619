import { describe, expect, it } from 'vitest';

import {
  buildCompareModel,
  overlaySegments,
  parameterDeltas,
} from '../src/compare.js';
import type { ParametersWire } from '../src/types.js';
import { fixtureRecord, parametersWire } from './helpers.js';

// Frozen cross-check against the measurement core: parameters of the shared
// fixture raster (A) and of the same raster with C7/T1 moved +3 px and the
// rest -2 px in x, everything +1.5 px in y (B), plus the core's
// parameter_difference output for A - B.
const CORE_A: ParametersWire = {
  view: 'WHOLE_SPINE',
  SVA: 10.723860589812332, PT: 19.53665493812838, SS: 26.565051177077976,
  PI: 46.10170611520638, LL: 33.27488798483492, T1PA: 13.482463044013542,
  L1PA: 5.879012432316216,
};
const CORE_B: ParametersWire = {
  view: 'WHOLE_SPINE',
  SVA: 12.064343163538874, PT: 19.53665493812838, SS: 26.565051177077976,
  PI: 46.10170611520638, LL: 33.27488798483492, T1PA: 15.636161195746496,
  L1PA: 5.879012432316216,
};
const CORE_DIFF: Record<string, number> = {
  SVA: -1.3404825737265416, PT: 0.0, SS: 0.0, PI: 0.0, LL: 0.0,
  T1PA: -2.1536981517329536, L1PA: 0.0,
};

describe('parameter deltas', () => {
  it('matches the measurement core on the frozen fixture', () => {
    const rows = parameterDeltas(CORE_A, CORE_B);
    for (const row of rows) {
      expect(row.delta).toBeCloseTo(CORE_DIFF[row.parameter], 12);
    }
  });

  it('is zero for identical raters', () => {
    const rows = parameterDeltas(parametersWire(), parametersWire());
    expect(rows.every((row) => row.delta === 0)).toBe(true);
  });

  it('keeps parameters absent on either side absent', () => {
    const lumboA = parametersWire({
      view: 'LUMBOSACRAL', SVA: null, PT: null, PI: null, T1PA: null,
      L1PA: null, SS: 31.0, LL: 52.0,
    });
    const lumboB = parametersWire({
      view: 'LUMBOSACRAL', SVA: null, PT: null, PI: null, T1PA: null,
      L1PA: null, SS: 30.0, LL: 50.0,
    });
    const rows = parameterDeltas(lumboA, lumboB);
    const byName = Object.fromEntries(rows.map((r) => [r.parameter, r.delta]));
    expect(byName.SS).toBeCloseTo(1.0, 12);
    expect(byName.LL).toBeCloseTo(2.0, 12);
    expect(byName.SVA).toBeNull();
    expect(byName.PI).toBeNull();
  });
});

describe('overlay', () => {
  it('pairs same-name visible keypoints of both raters', () => {
    const a = fixtureRecord();
    const b = fixtureRecord();
    b.keypoints.forEach((kp) => { kp.x_px += 4; });
    const segments = overlaySegments(a, b);
    expect(segments).toHaveLength(9);
    for (const segment of segments) {
      expect(segment.bx - segment.ax).toBeCloseTo(4, 12);
    }
  });

  it('skips landmarks invisible on either side', () => {
    const a = fixtureRecord();
    const b = fixtureRecord();
    b.keypoints.find((kp) => kp.name === 'C7')!.visible = false;
    expect(overlaySegments(a, b)).toHaveLength(8);
  });
});

describe('compare model', () => {
  it('builds deltas and segments when both raters exist', () => {
    const model = buildCompareModel('R1', 'R2', fixtureRecord(),
      fixtureRecord(), parametersWire(), parametersWire());
    expect(model.ok).toBe(true);
    expect(model.deltas).toHaveLength(7);
    expect(model.segments).toHaveLength(9);
  });

  it('reports the missing rater as an empty state', () => {
    const model = buildCompareModel('R1', 'ghost', fixtureRecord(), null,
      parametersWire(), null);
    expect(model.ok).toBe(false);
    expect(model.missingRater).toBe('ghost');
    expect(model.deltas).toHaveLength(0);
  });
});
