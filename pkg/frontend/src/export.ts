// Export: lossless layout JSON round trip and a flat composite PNG
// (category-colored boxes with labels over the background).

import { snapPx, toPixels, type PxBox } from "./geometry.js";
import type { Category, LayoutDoc, LayoutElement } from "./types.js";

export function exportLayoutJson(layout: LayoutDoc): string {
  return JSON.stringify(layout);
}

export function importLayoutJson(text: string): LayoutDoc {
  const parsed = JSON.parse(text);
  if (!parsed || !Array.isArray(parsed.elements)) {
    throw new Error("not a layout document: missing elements array");
  }
  const elements: LayoutElement[] = parsed.elements.map((e: LayoutElement, i: number) => {
    for (const key of ["category", "cx", "cy", "w", "h"] as const) {
      if (e[key] === undefined) throw new Error(`element ${i} missing ${key}`);
    }
    return { category: e.category, cx: e.cx, cy: e.cy, w: e.w, h: e.h };
  });
  return { elements };
}

export const CATEGORY_COLORS: Record<Category, string> = {
  logo: "#e4572e",
  text: "#2e86ab",
  underlay: "#f6ae2d",
};

export interface CompositeBox extends PxBox {
  category: Category;
  color: string;
  label: string;
}

/** Pixel-snapped box geometry for a composite render at the given size. */
export function compositeBoxes(layout: LayoutDoc, size: number): CompositeBox[] {
  // draw underlays first so texts/logos composite on top
  const order = [...layout.elements].sort(
    (a, b) => (a.category === "underlay" ? 0 : 1) - (b.category === "underlay" ? 0 : 1),
  );
  return order.map((e) => {
    const box = snapPx(toPixels(e, size));
    return { ...box, category: e.category, color: CATEGORY_COLORS[e.category], label: e.category };
  });
}

/** Render the composite onto a 2D canvas context (background already drawn). */
export function drawComposite(
  ctx: CanvasRenderingContext2D,
  layout: LayoutDoc,
  size: number,
): void {
  for (const box of compositeBoxes(layout, size)) {
    ctx.fillStyle = box.color + (box.category === "underlay" ? "aa" : "cc");
    ctx.fillRect(box.x, box.y, box.w, box.h);
    ctx.strokeStyle = box.color;
    ctx.lineWidth = 2;
    ctx.strokeRect(box.x, box.y, box.w, box.h);
    ctx.fillStyle = "#ffffff";
    ctx.font = `${Math.max(10, Math.round(size / 40))}px sans-serif`;
    ctx.fillText(box.label, box.x + 4, box.y + Math.max(12, Math.round(size / 36)));
  }
}

export function downloadName(kind: "json" | "png", seed: number): string {
  return `layout_seed${seed}.${kind}`;
}
