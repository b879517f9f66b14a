// Editor canvas painting: background, saliency heat overlay with the
// extracted salient-region outline, working elements with handles, and
// streamed intermediate layouts.

import { pixelBox } from "./state.js";
import type { State, WorkingElement } from "./state.js";
import { CATEGORY_COLORS } from "./export.js";
import type { LayoutDoc } from "./types.js";

export interface SalientView {
  /** normalized bbox of the thresholded salient region, if any */
  box: { cx: number; cy: number; w: number; h: number } | null;
  /** grayscale saliency image, if loaded */
  image: HTMLImageElement | null;
}

/** Threshold >= 0.5 bounding box of a grayscale saliency image. */
export function extractSalbox(
  data: Uint8ClampedArray,
  width: number,
  height: number,
): { cx: number; cy: number; w: number; h: number } | null {
  let x0 = width, y0 = height, x1 = -1, y1 = -1;
  for (let i = 0; i < height; i++) {
    for (let j = 0; j < width; j++) {
      const v = data[(i * width + j) * 4]; // red channel of grayscale
      if (v >= 128) {
        if (j < x0) x0 = j;
        if (j > x1) x1 = j;
        if (i < y0) y0 = i;
        if (i > y1) y1 = i;
      }
    }
  }
  if (x1 < 0) return null;
  const w = (x1 + 1 - x0) / width;
  const h = (y1 + 1 - y0) / height;
  return { cx: x0 / width + w / 2, cy: y0 / height + h / 2, w, h };
}

export function drawEditor(
  ctx: CanvasRenderingContext2D,
  size: number,
  background: HTMLImageElement | null,
  salient: SalientView,
  showSaliency: boolean,
  state: State,
  selectedElement: number | null,
): void {
  ctx.clearRect(0, 0, size, size);
  if (background) {
    ctx.drawImage(background, 0, 0, size, size);
  } else {
    ctx.fillStyle = "#dfe3e8";
    ctx.fillRect(0, 0, size, size);
  }
  if (showSaliency && salient.image) {
    ctx.save();
    ctx.globalAlpha = 0.45;
    ctx.drawImage(salient.image, 0, 0, size, size);
    ctx.restore();
  }
  if (showSaliency && salient.box) {
    const b = salient.box;
    ctx.strokeStyle = "#d7263d";
    ctx.setLineDash([6, 4]);
    ctx.lineWidth = 2;
    ctx.strokeRect((b.cx - b.w / 2) * size, (b.cy - b.h / 2) * size, b.w * size, b.h * size);
    ctx.setLineDash([]);
  }
  const layout = state.streaming ?? currentLayout(state);
  if (layout) drawLayoutBoxes(ctx, layout, size);
  state.elements.forEach((el, i) => drawWorkingElement(ctx, el, size, i === selectedElement));
}

function currentLayout(state: State): LayoutDoc | null {
  if (state.selected === null) return null;
  return state.candidates[state.selected]?.layout ?? null;
}

export function drawLayoutBoxes(ctx: CanvasRenderingContext2D, layout: LayoutDoc, size: number): void {
  const order = [...layout.elements].sort(
    (a, b) => (a.category === "underlay" ? 0 : 1) - (b.category === "underlay" ? 0 : 1),
  );
  for (const e of order) {
    const color = CATEGORY_COLORS[e.category];
    const x = (e.cx - e.w / 2) * size;
    const y = (e.cy - e.h / 2) * size;
    ctx.fillStyle = color + "55";
    ctx.fillRect(x, y, e.w * size, e.h * size);
    ctx.strokeStyle = color;
    ctx.lineWidth = 2;
    ctx.strokeRect(x, y, e.w * size, e.h * size);
    ctx.fillStyle = color;
    ctx.font = "11px sans-serif";
    ctx.fillText(e.category, x + 3, y + 12);
  }
}

function drawWorkingElement(
  ctx: CanvasRenderingContext2D,
  el: WorkingElement,
  size: number,
  selected: boolean,
): void {
  const box = pixelBox(el, size);
  const color = CATEGORY_COLORS[el.category];
  ctx.strokeStyle = color;
  ctx.lineWidth = selected ? 3 : 1.5;
  ctx.setLineDash(el.anchored ? [] : [4, 3]);
  ctx.strokeRect(box.x, box.y, box.w, box.h);
  ctx.setLineDash([]);
  ctx.fillStyle = color;
  ctx.font = "11px sans-serif";
  const tag = el.anchored ? `${el.category} (anchored)` : el.category;
  ctx.fillText(tag, box.x + 3, box.y - 4 < 10 ? box.y + 12 : box.y - 4);
  if (selected) {
    for (const [hx, hy] of [
      [box.x, box.y], [box.x + box.w, box.y],
      [box.x, box.y + box.h], [box.x + box.w, box.y + box.h],
    ]) {
      ctx.fillRect(hx - 3, hy - 3, 6, 6);
    }
  }
}

/** Metric badge text for the candidate gallery. */
export function metricBadges(m: {
  occ: number;
  rea: number;
  und_l: number;
  und_s: number;
  ove: number;
}): string[] {
  return [
    `Occ ${m.occ.toFixed(3)}`,
    `Rea ${m.rea.toFixed(3)}`,
    `Und_l ${m.und_l.toFixed(2)}`,
    `Und_s ${m.und_s.toFixed(2)}`,
    `Ove ${m.ove.toFixed(3)}`,
  ];
}
