// Hash-routed shell: #/annotate/<study>/<rater>, #/compare/<study>/<a>/<b>,
// #/dashboard/<pred>/<gt>; defaults to the study list.

import { ApiClient } from './api.js';
import { AnnotateView } from './annotate.js';
import { buildCompareModel } from './compare.js';
import { buildDashboard, iccHeatmapSvg, pckChartSvg,
  ERROR_TABLE_HEADERS } from './dashboard.js';
import type { AnnotationRecordWire, ParametersWire } from './types.js';

const api = new ApiClient(
  (window as { SPINOMETRY_API?: string }).SPINOMETRY_API
  ?? 'http://127.0.0.1:8731');

function el(): HTMLElement {
  return document.getElementById('app')!;
}

async function showStudies(): Promise<void> {
  const studies = await api.listStudies();
  el().innerHTML = `
    <h1>Studies</h1>
    <table class="studies">
      <thead><tr><th>study</th><th>raters</th><th>complete</th><th></th></tr></thead>
      <tbody>${studies.map((s) => `
        <tr>
          <td>${s.study_id}</td>
          <td>${s.rater_ids.join(', ')}</td>
          <td>${s.rater_ids.filter((r) => s.completeness[r]).length}/${s.rater_ids.length}</td>
          <td>${s.rater_ids.map((r) =>
            `<a href="#/annotate/${s.study_id}/${r}">${r}</a>`).join(' ')}
            ${s.rater_ids.length >= 2
              ? `<a href="#/compare/${s.study_id}/${s.rater_ids[0]}/${s.rater_ids[1]}">compare</a>`
              : ''}</td>
        </tr>`).join('')}
      </tbody>
    </table>
    <p>${studies.length} studies</p>`;
}

async function showAnnotate(studyId: string, raterId: string): Promise<void> {
  const view = new AnnotateView(api, el(), studyId, raterId);
  await view.start();
}

async function computeFor(record: AnnotationRecordWire): Promise<ParametersWire | null> {
  try {
    return await api.compute({
      pixel_spacing_px_per_mm: record.image.pixel_spacing_px_per_mm,
      view: record.view,
      keypoints: record.keypoints,
    });
  } catch {
    return null;
  }
}

async function showCompare(studyId: string, raterA: string,
                           raterB: string): Promise<void> {
  const fetchRecord = async (rater: string) => {
    try {
      return (await api.getAnnotation(studyId, rater)).record;
    } catch {
      return null;
    }
  };
  const recordA = await fetchRecord(raterA);
  const recordB = await fetchRecord(raterB);
  const model = buildCompareModel(
    raterA, raterB, recordA, recordB,
    recordA ? await computeFor(recordA) : null,
    recordB ? await computeFor(recordB) : null);
  if (!model.ok) {
    el().innerHTML = `<h1>${studyId}</h1>
      <p class="empty">No annotation from ${model.missingRater ?? 'a rater'}
      on this study yet.</p>`;
    return;
  }
  const size = recordA!.image;
  const scale = Math.min(520 / size.width_px, 680 / size.height_px);
  el().innerHTML = `
    <h1>${studyId}: ${raterA} vs ${raterB}</h1>
    <div class="compare-layout">
      <svg viewBox="0 0 ${size.width_px} ${size.height_px}"
           width="${Math.round(size.width_px * scale)}">
        ${model.segments.map((s) => `
          <line x1="${s.ax}" y1="${s.ay}" x2="${s.bx}" y2="${s.by}"
                stroke="#888" stroke-dasharray="4 3"/>
          <circle cx="${s.ax}" cy="${s.ay}" r="6" fill="#4363d8"/>
          <circle cx="${s.bx}" cy="${s.by}" r="6" fill="#e6194b"/>`).join('')}
      </svg>
      <div>
        <p class="legend">
          <span style="color:#4363d8">&#9679; ${raterA}</span>
          <span style="color:#e6194b">&#9679; ${raterB}</span>
        </p>
        <table class="deltas">
          <thead><tr><th>parameter</th><th>${raterA}</th><th>${raterB}</th>
          <th>delta</th></tr></thead>
          <tbody>${model.deltas.map((d) => `
            <tr><th>${d.parameter}</th>
            <td>${d.a === null ? '-' : d.a.toFixed(1)}</td>
            <td>${d.b === null ? '-' : d.b.toFixed(1)}</td>
            <td>${d.delta === null ? '-' : d.delta.toFixed(1)}</td></tr>`).join('')}
          </tbody>
        </table>
      </div>
    </div>`;
}

async function showDashboard(pred: string, gt: string): Promise<void> {
  let response;
  try {
    response = await api.cohortReport(pred, gt);
  } catch {
    el().innerHTML = '<p class="empty">No overlapping studies between these '
      + 'raters; nothing to report.</p>';
    return;
  }
  const model = buildDashboard(response.report);
  el().innerHTML = `
    <h1>Cohort report: ${model.predSource} vs ${model.gtSource}
        (n=${model.nStudies})</h1>
    ${model.blocks.map((block) => `
      <h2>${block.title} (n=${block.nPairs})</h2>
      <table class="errors-table">
        <thead><tr>${ERROR_TABLE_HEADERS.map((h) => `<th>${h}</th>`).join('')}</tr></thead>
        <tbody>${block.rows.map((row) => `
          <tr><th>${row.parameter} (${row.unit})</th>
          <td>${row.overallMeanSd}</td><td>${row.overallMedianIqr}</td>
          <td>${row.withInstrumentation}</td>
          <td>${row.withoutInstrumentation}</td>
          <td>${row.pValue}</td></tr>`).join('')}
        </tbody>
      </table>`).join('')}
    <h2>Keypoint accuracy (PCK)</h2>
    <div class="chart">${pckChartSvg(model)}</div>
    <h2>Inter-rater reliability (ICC)</h2>
    <div class="chart">${iccHeatmapSvg(model)}</div>`;
}

async function route(): Promise<void> {
  const parts = window.location.hash.replace(/^#\/?/, '').split('/')
    .filter((p) => p.length > 0).map(decodeURIComponent);
  try {
    if (parts[0] === 'annotate' && parts.length === 3) {
      await showAnnotate(parts[1], parts[2]);
    } else if (parts[0] === 'compare' && parts.length === 4) {
      await showCompare(parts[1], parts[2], parts[3]);
    } else if (parts[0] === 'dashboard' && parts.length === 3) {
      await showDashboard(parts[1], parts[2]);
    } else {
      await showStudies();
    }
  } catch (error) {
    el().innerHTML = `<p class="empty">${String(error)}</p>`;
  }
}

window.addEventListener('hashchange', () => void route());
window.addEventListener('DOMContentLoaded', () => void route());
