// Editor state: the working element list, active task semantics, candidate
// gallery, and the refine history stack. Pure functions over a State value;
// the DOM layer subscribes and re-renders.

import { clampBox, snapPx, toNormalized, toPixels, type PxBox } from "./geometry.js";
import type {
  Category,
  ElementSpec,
  GenerateRequest,
  LayoutDoc,
  MetricsReport,
  SampleOut,
  Task,
} from "./types.js";

export interface WorkingElement {
  category: Category;
  cx: number;
  cy: number;
  w: number;
  h: number;
  anchored: boolean;
}

export interface Candidate {
  layout: LayoutDoc;
  metrics: MetricsReport;
  seed: number;
  history: LayoutDoc[]; // pre-refine snapshots, newest last
}

export interface State {
  task: Task;
  elements: WorkingElement[];
  numSamples: number;
  seed: number | null;
  canvasId: string | null;
  candidates: Candidate[];
  selected: number | null;
  streaming: LayoutDoc | null; // live intermediate during SSE animation
}

export function initialState(): State {
  return {
    task: "c_to_sp",
    elements: [],
    numSamples: 4,
    seed: null,
    canvasId: null,
    candidates: [],
    selected: null,
    streaming: null,
  };
}

export interface FieldPolicy {
  position: boolean; // drag enabled
  size: boolean; // resize enabled
  anchor: boolean; // anchor toggle shown
}

/** Which editor fields the active task lets the user set. */
export function editableFields(task: Task, anchored: boolean): FieldPolicy {
  switch (task) {
    case "c_to_sp":
      return { position: false, size: false, anchor: false };
    case "cs_to_p":
      return { position: false, size: true, anchor: false };
    case "completion":
      // anchored elements are fully user-placed but frozen once anchored
      return { position: !anchored, size: !anchored, anchor: true };
    case "refinement":
      return { position: true, size: true, anchor: false };
    case "unconstrained":
      return { position: false, size: false, anchor: false };
  }
}

export function addElement(state: State, category: Category): State {
  const offset = 0.04 * (state.elements.length % 5);
  const el: WorkingElement = {
    category,
    cx: 0.5 + offset,
    cy: 0.5 + offset,
    w: category === "logo" ? 0.12 : 0.3,
    h: category === "logo" ? 0.12 : 0.08,
    anchored: false,
  };
  return { ...state, elements: [...state.elements, el] };
}

export function removeElement(state: State, index: number): State {
  return { ...state, elements: state.elements.filter((_, i) => i !== index) };
}

export function setTask(state: State, task: Task): State {
  // anchors only mean something for completion
  const elements =
    task === "completion" ? state.elements : state.elements.map((e) => ({ ...e, anchored: false }));
  return { ...state, task, elements };
}

export function toggleAnchor(state: State, index: number): State {
  const elements = state.elements.map((e, i) =>
    i === index ? { ...e, anchored: !e.anchored } : e,
  );
  return { ...state, elements };
}

/** Apply a pixel-space box edit, snapped to the working raster. */
export function moveElement(state: State, index: number, box: PxBox, size: number): State {
  const el = state.elements[index];
  const policy = editableFields(state.task, el.anchored && state.task === "completion" ? false : el.anchored);
  void policy; // callers gate interactions; the reducer snaps unconditionally
  const snapped = toNormalized(snapPx(clampBox(box, size)), size);
  const elements = state.elements.map((e, i) => (i === index ? { ...e, ...snapped } : e));
  return { ...state, elements };
}

export function pixelBox(el: WorkingElement, size: number): PxBox {
  return toPixels(el, size);
}

/** The exact request body the service expects for the current editor state. */
export function buildRequest(state: State, canvasPng?: string, saliencyPng?: string): GenerateRequest {
  const elements: ElementSpec[] = state.elements.map((e) => {
    const spec: ElementSpec = { category: e.category };
    if (state.task === "cs_to_p") {
      spec.w = e.w;
      spec.h = e.h;
    } else if (state.task === "completion") {
      spec.anchored = e.anchored;
      if (e.anchored) {
        spec.cx = e.cx;
        spec.cy = e.cy;
        spec.w = e.w;
        spec.h = e.h;
      }
    } else if (state.task === "refinement") {
      spec.cx = e.cx;
      spec.cy = e.cy;
      spec.w = e.w;
      spec.h = e.h;
    }
    return spec;
  });
  const req: GenerateRequest = {
    task: state.task,
    elements,
    num_samples: state.numSamples,
  };
  if (state.seed !== null) req.seed = state.seed;
  if (state.canvasId) req.canvas_id = state.canvasId;
  else {
    req.canvas_png = canvasPng;
    req.saliency_png = saliencyPng;
  }
  return req;
}

export function beginStream(state: State): State {
  return { ...state, streaming: { elements: [] }, candidates: [], selected: null };
}

export function streamStep(state: State, layout: LayoutDoc): State {
  return { ...state, streaming: layout };
}

export function finishGeneration(state: State, samples: SampleOut[], canvasId: string | null): State {
  return {
    ...state,
    streaming: null,
    canvasId: canvasId ?? state.canvasId,
    candidates: samples.map((s) => ({ layout: s.layout, metrics: s.metrics, seed: s.seed, history: [] })),
    selected: samples.length ? 0 : null,
  };
}

export function selectCandidate(state: State, index: number): State {
  if (index < 0 || index >= state.candidates.length) return state;
  return { ...state, selected: index };
}

/** Replace the selected candidate with its refined version, keeping history. */
export function applyRefinement(state: State, refined: SampleOut): State {
  if (state.selected === null) return state;
  const candidates = state.candidates.map((c, i) =>
    i === state.selected
      ? {
          layout: refined.layout,
          metrics: refined.metrics,
          seed: refined.seed,
          history: [...c.history, c.layout],
        }
      : c,
  );
  return { ...state, candidates };
}

/** Revert the selected candidate to its pre-refine snapshot. */
export function revertRefinement(state: State): State {
  if (state.selected === null) return state;
  const current = state.candidates[state.selected];
  if (!current.history.length) return state;
  const history = current.history.slice(0, -1);
  const layout = current.history[current.history.length - 1];
  const candidates = state.candidates.map((c, i) =>
    i === state.selected ? { ...c, layout, history } : c,
  );
  return { ...state, candidates };
}

/** Attributes the task pins; used to assert frozen values during animation. */
export function constrainedAttributes(state: State): Array<Partial<WorkingElement>> {
  return state.elements.map((e) => {
    switch (state.task) {
      case "c_to_sp":
        return { category: e.category };
      case "cs_to_p":
        return { category: e.category, w: e.w, h: e.h };
      case "completion":
        return e.anchored ? { category: e.category, cx: e.cx, cy: e.cy, w: e.w, h: e.h } : {};
      default:
        return {};
    }
  });
}
