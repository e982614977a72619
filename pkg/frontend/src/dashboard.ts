// Cohort dashboard: renders the service's evaluation report verbatim.
// Every cell, curve point, and heatmap value is copied from the report
// document; nothing is recomputed on the client.

import type {
  IccRowWire,
  ReportBlockWire,
  ReportWire,
} from './types.js';

export const ERROR_TABLE_HEADERS = [
  'Parameter',
  'Overall Mean (SD)',
  'Overall Median (IQR)',
  'Median (IQR) With Instrumentation',
  'Median (IQR) Without Instrumentation',
  'p-value',
] as const;

export interface ErrorTableRow {
  parameter: string;
  unit: string;
  overallMeanSd: string;
  overallMedianIqr: string;
  withInstrumentation: string;
  withoutInstrumentation: string;
  pValue: string;
  /** verbatim numbers backing the formatted cells */
  values: {
    mean: number; sd: number; median: number; iqr: number;
    p: number;
    medianWith: number | null; iqrWith: number | null;
    medianWithout: number | null; iqrWithout: number | null;
  };
}

export interface ErrorTableBlock {
  title: string;
  view: string;
  nPairs: number;
  rows: ErrorTableRow[];
}

const UNITS: Record<string, string> = {
  SVA: 'mm', PT: 'deg', SS: 'deg', PI: 'deg',
  LL: 'deg', T1PA: 'deg', L1PA: 'deg',
};

function fmt(value: number | null, digits = 1): string {
  return value === null ? '-' : value.toFixed(digits);
}

function pair(a: number | null, b: number | null): string {
  return `${fmt(a)} (${fmt(b)})`;
}

function blockRows(block: ReportBlockWire): ErrorTableRow[] {
  const withStratum = block.strata['with_instrumentation'] ?? null;
  const withoutStratum = block.strata['without_instrumentation'] ?? null;
  return Object.entries(block.overall.per_parameter).map(([parameter, stats]) => {
    const sWith = withStratum?.per_parameter[parameter] ?? null;
    const sWithout = withoutStratum?.per_parameter[parameter] ?? null;
    const p = block.wilcoxon[parameter].p_two_sided;
    return {
      parameter,
      unit: UNITS[parameter] ?? '',
      overallMeanSd: pair(stats.mean, stats.sd),
      overallMedianIqr: pair(stats.median, stats.iqr),
      withInstrumentation: pair(sWith?.median ?? null, sWith?.iqr ?? null),
      withoutInstrumentation: pair(sWithout?.median ?? null, sWithout?.iqr ?? null),
      pValue: p.toFixed(2),
      values: {
        mean: stats.mean, sd: stats.sd, median: stats.median, iqr: stats.iqr,
        p,
        medianWith: sWith?.median ?? null, iqrWith: sWith?.iqr ?? null,
        medianWithout: sWithout?.median ?? null, iqrWithout: sWithout?.iqr ?? null,
      },
    };
  });
}

export interface PckSeries {
  landmark: string;
  fractions: number[];
}

export interface HeatmapCell {
  raterA: string;
  raterB: string;
  parameter: string;
  icc: number | null;
  /** hover text: rater pair plus the coefficient to 2 decimals */
  hover: string;
}

export interface DashboardModel {
  cohortId: string;
  predSource: string;
  gtSource: string;
  nStudies: number;
  blocks: ErrorTableBlock[];
  pckThresholds: number[];
  pckSeries: PckSeries[];
  heatmap: HeatmapCell[];
  methods: Record<string, unknown>;
}

export function iccHover(row: IccRowWire): string {
  const value = row.icc === null ? 'undefined' : row.icc.toFixed(2);
  return `${row.rater_a} vs ${row.rater_b} - ${row.parameter}: ${value}`;
}

export function buildDashboard(report: ReportWire): DashboardModel {
  const blocks = report.blocks.map((block) => ({
    title: block.view === 'WHOLE_SPINE' ? 'Whole Spine Images'
      : 'Lumbosacral Images',
    view: block.view,
    nPairs: block.n_pairs,
    rows: blockRows(block),
  }));
  const pckSeries: PckSeries[] = [];
  if (report.pck) {
    for (const [landmark, fractions] of Object.entries(report.pck.per_landmark)) {
      pckSeries.push({ landmark, fractions: [...fractions] });
    }
    pckSeries.push({ landmark: 'overall', fractions: [...report.pck.overall] });
  }
  return {
    cohortId: report.cohort_id,
    predSource: report.pred_source,
    gtSource: report.gt_source,
    nStudies: report.n_studies,
    blocks,
    pckThresholds: report.pck ? [...report.pck.thresholds_mm] : [],
    pckSeries,
    heatmap: report.icc_matrix.map((row) => ({
      raterA: row.rater_a,
      raterB: row.rater_b,
      parameter: row.parameter,
      icc: row.icc,
      hover: iccHover(row),
    })),
    methods: report.generation,
  };
}

// SVG builders (string-based so they are testable without a DOM)

const SVG_W = 560;
const SVG_H = 360;
const PAD = 44;

export function pckChartSvg(model: DashboardModel): string {
  const thresholds = model.pckThresholds;
  if (thresholds.length === 0) return '<svg></svg>';
  const xOf = (t: number) => PAD + ((t - thresholds[0])
    / (thresholds[thresholds.length - 1] - thresholds[0] || 1))
    * (SVG_W - 2 * PAD);
  const yOf = (fraction: number) => SVG_H - PAD - fraction * (SVG_H - 2 * PAD);
  const palette = ['#4363d8', '#e6194b', '#3cb44b', '#f58231', '#911eb4',
    '#46f0f0', '#808000', '#9a6324', '#000000'];
  const parts: string[] = [
    `<svg viewBox="0 0 ${SVG_W} ${SVG_H}" xmlns="http://www.w3.org/2000/svg">`,
    `<line x1="${PAD}" y1="${SVG_H - PAD}" x2="${SVG_W - PAD}" y2="${SVG_H - PAD}" stroke="#444"/>`,
    `<line x1="${PAD}" y1="${PAD}" x2="${PAD}" y2="${SVG_H - PAD}" stroke="#444"/>`,
  ];
  for (const t of thresholds) {
    parts.push(`<text x="${xOf(t)}" y="${SVG_H - PAD + 16}" font-size="10" `
      + `text-anchor="middle">${t}</text>`);
  }
  parts.push(`<text x="${SVG_W / 2}" y="${SVG_H - 8}" font-size="11" `
    + 'text-anchor="middle">distance threshold (mm)</text>');
  model.pckSeries.forEach((series, index) => {
    const color = series.landmark === 'overall' ? '#111'
      : palette[index % palette.length];
    const width = series.landmark === 'overall' ? 2.5 : 1.2;
    const points = series.fractions
      .map((fraction, i) => `${xOf(thresholds[i])},${yOf(fraction)}`)
      .join(' ');
    parts.push(`<polyline points="${points}" fill="none" stroke="${color}" `
      + `stroke-width="${width}" data-landmark="${series.landmark}"/>`);
  });
  parts.push('</svg>');
  return parts.join('');
}

export function iccHeatmapSvg(model: DashboardModel): string {
  const pairs = [...new Set(model.heatmap.map((c) => `${c.raterA} vs ${c.raterB}`))];
  const parameters = [...new Set(model.heatmap.map((c) => c.parameter))];
  const cellW = 64;
  const cellH = 34;
  const left = 130;
  const top = 30;
  const width = left + parameters.length * cellW + 10;
  const height = top + pairs.length * cellH + 10;
  const parts = [
    `<svg viewBox="0 0 ${width} ${height}" xmlns="http://www.w3.org/2000/svg">`,
  ];
  parameters.forEach((parameter, j) => {
    parts.push(`<text x="${left + j * cellW + cellW / 2}" y="${top - 10}" `
      + `font-size="11" text-anchor="middle">${parameter}</text>`);
  });
  pairs.forEach((pairLabel, i) => {
    parts.push(`<text x="${left - 8}" y="${top + i * cellH + cellH / 2 + 4}" `
      + `font-size="11" text-anchor="end">${pairLabel}</text>`);
  });
  for (const cell of model.heatmap) {
    const i = pairs.indexOf(`${cell.raterA} vs ${cell.raterB}`);
    const j = parameters.indexOf(cell.parameter);
    const value = cell.icc;
    const shade = value === null ? '#bbb'
      : `hsl(${Math.round(120 * Math.max(0, Math.min(1, value)))}, 65%, 52%)`;
    parts.push(`<g><rect x="${left + j * cellW}" y="${top + i * cellH}" `
      + `width="${cellW - 2}" height="${cellH - 2}" fill="${shade}">`
      + `<title>${cell.hover}</title></rect>`
      + `<text x="${left + j * cellW + cellW / 2 - 1}" `
      + `y="${top + i * cellH + cellH / 2 + 3}" font-size="10" `
      + `text-anchor="middle">${value === null ? 'n/a' : value.toFixed(2)}`
      + '</text></g>');
  }
  parts.push('</svg>');
  return parts.join('');
}
