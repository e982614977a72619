// Wire types mirroring the review service's JSON bodies. The UI never
// derives a parameter or statistic itself; these shapes are read-only
// views of what the service sent.

export type View = 'WHOLE_SPINE' | 'LUMBOSACRAL';

export type LandmarkName =
  | 'C7' | 'T1'
  | 'L1_ANT' | 'L1_POST' | 'L1_MID'
  | 'S1_ANT' | 'S1_POST'
  | 'FEM_L' | 'FEM_R';

export const LANDMARK_ORDER: LandmarkName[] = [
  'C7', 'T1', 'L1_ANT', 'L1_POST', 'L1_MID',
  'S1_ANT', 'S1_POST', 'FEM_L', 'FEM_R',
];

export type ParameterLabel = 'SVA' | 'PT' | 'SS' | 'PI' | 'LL' | 'T1PA' | 'L1PA';

export const PARAMETER_ORDER: ParameterLabel[] = [
  'SVA', 'PT', 'SS', 'PI', 'LL', 'T1PA', 'L1PA',
];

export const PARAMETER_UNITS: Record<ParameterLabel, string> = {
  SVA: 'mm', PT: 'deg', SS: 'deg', PI: 'deg',
  LL: 'deg', T1PA: 'deg', L1PA: 'deg',
};

/** Landmarks each parameter needs; used only to explain incompleteness. */
export const PARAMETER_REQUIREMENTS: Record<ParameterLabel, LandmarkName[]> = {
  SVA: ['C7', 'S1_ANT', 'S1_POST'],
  PT: ['FEM_L', 'FEM_R', 'S1_ANT', 'S1_POST'],
  SS: ['S1_ANT', 'S1_POST'],
  PI: ['FEM_L', 'FEM_R', 'S1_ANT', 'S1_POST'],
  LL: ['L1_ANT', 'L1_POST', 'S1_ANT', 'S1_POST'],
  T1PA: ['T1', 'FEM_L', 'FEM_R', 'S1_ANT', 'S1_POST'],
  L1PA: ['L1_MID', 'FEM_L', 'FEM_R', 'S1_ANT', 'S1_POST'],
};

export interface KeypointWire {
  name: LandmarkName;
  x_px: number;
  y_px: number;
  visible: boolean;
}

export interface KeypointSetWire {
  pixel_spacing_px_per_mm: number;
  view: View;
  keypoints: KeypointWire[];
}

export interface ParametersWire {
  view: View;
  SVA: number | null;
  PT: number | null;
  SS: number | null;
  PI: number | null;
  LL: number | null;
  T1PA: number | null;
  L1PA: number | null;
}

export interface ImageInfoWire {
  file_path: string;
  width_px: number;
  height_px: number;
  pixel_spacing_px_per_mm: number;
}

export interface BoxWire { x: number; y: number; w: number; h: number; }

export interface ClinicalMetadataWire {
  spinal_instrumentation: boolean;
  brace: boolean;
  hip_arthroplasty: boolean;
  levels_instrumented: number | null;
  transitional_anatomy: boolean;
  diagnoses: string[];
}

export interface AnnotationRecordWire {
  schema_version: string;
  study_id: string;
  rater_id: string;
  source: 'HUMAN' | 'MODEL';
  image: ImageInfoWire;
  view: View;
  keypoints: KeypointWire[];
  boxes: Record<string, BoxWire>;
  metadata: ClinicalMetadataWire;
}

export interface AnnotationEnvelope {
  revision: number;
  record: AnnotationRecordWire;
}

export interface StudySummaryWire {
  study_id: string;
  rater_ids: string[];
  image: ImageInfoWire | null;
  metadata: ClinicalMetadataWire | null;
  completeness: Record<string, boolean>;
}

export interface DescriptiveWire {
  mean: number; sd: number; median: number; iqr: number; n: number;
}

export interface ErrorSummaryWire {
  stratum: string | null;
  n: number;
  per_parameter: Record<string, DescriptiveWire>;
}

export interface RankSumWire {
  u_statistic: number;
  z_value: number;
  p_two_sided: number;
  n1: number;
  n2: number;
  tie_correction_applied: boolean;
  method: 'EXACT' | 'NORMAL_APPROX';
}

export interface ReportBlockWire {
  view: View;
  n_pairs: number;
  overall: ErrorSummaryWire;
  strata: Record<string, ErrorSummaryWire | null>;
  empty_strata: string[];
  wilcoxon: Record<string, RankSumWire>;
  icc: Record<string, number | null>;
  /** per-source descriptive stats of the raw parameter values */
  values: Record<string, Record<string, DescriptiveWire>>;
}

export interface PckWire {
  thresholds_mm: number[];
  per_landmark: Record<string, number[]>;
  overall: number[];
  overall_macro: number[];
  n_images: number;
  excluded: Record<string, number>;
}

export interface IccRowWire {
  rater_a: string;
  rater_b: string;
  parameter: string;
  icc: number | null;
}

export interface RadarRowWire {
  source: string;
  parameter: string;
  median_error: number;
}

export interface ReportWire {
  cohort_id: string;
  pred_source: string;
  gt_source: string;
  n_studies: number;
  generation: Record<string, unknown>;
  blocks: ReportBlockWire[];
  pck: PckWire | null;
  icc_matrix: IccRowWire[];
  radar: RadarRowWire[];
}

export interface ServiceErrorBody {
  error: string;
  detail: unknown;
}
