// API wire types, mirroring the service schemas.

export type Task = "c_to_sp" | "cs_to_p" | "completion" | "refinement" | "unconstrained";

export type Category = "logo" | "text" | "underlay";

export interface ElementSpec {
  category: Category;
  cx?: number;
  cy?: number;
  w?: number;
  h?: number;
  anchored?: boolean;
}

export interface LayoutElement {
  category: Category;
  cx: number;
  cy: number;
  w: number;
  h: number;
}

export interface LayoutDoc {
  elements: LayoutElement[];
}

export interface MetricsReport {
  occ: number;
  rea: number;
  und_l: number;
  und_s: number;
  ove: number;
  num_elements: number;
  num_underlays: number;
  num_texts: number;
}

export interface GenerateRequest {
  task: Task;
  elements: ElementSpec[];
  num_samples: number;
  seed?: number;
  canvas_id?: string;
  canvas_png?: string;
  saliency_png?: string;
}

export interface SampleOut {
  layout: LayoutDoc;
  metrics: MetricsReport;
  seed: number;
}

export interface GenerateResponse {
  samples: SampleOut[];
  timing_ms: number;
  canvas_id: string;
}

export interface StreamStepEvent {
  t: number;
  layout: LayoutDoc;
}

export interface StreamFinalEvent {
  final: true;
  layout: LayoutDoc;
  metrics: MetricsReport;
  seed: number;
  canvas_id: string;
}

export type StreamEvent = StreamStepEvent | StreamFinalEvent;

export function isFinalEvent(ev: StreamEvent): ev is StreamFinalEvent {
  return (ev as StreamFinalEvent).final === true;
}
