// Pixel <-> normalized coordinate conversion and box hit-testing for the
// editor canvas. Element edits are snapped to the pixel grid of the working
// resolution so round trips through the wire format stay exact to <= 1 px.

import type { LayoutElement } from "./types.js";

export interface PxBox {
  x: number; // left, px
  y: number; // top, px
  w: number;
  h: number;
}

export function toPixels(el: { cx: number; cy: number; w: number; h: number }, size: number): PxBox {
  return {
    x: (el.cx - el.w / 2) * size,
    y: (el.cy - el.h / 2) * size,
    w: el.w * size,
    h: el.h * size,
  };
}

export function snapPx(box: PxBox): PxBox {
  return {
    x: Math.round(box.x),
    y: Math.round(box.y),
    w: Math.round(box.w),
    h: Math.round(box.h),
  };
}

export function toNormalized(box: PxBox, size: number): { cx: number; cy: number; w: number; h: number } {
  return {
    cx: (box.x + box.w / 2) / size,
    cy: (box.y + box.h / 2) / size,
    w: box.w / size,
    h: box.h / size,
  };
}

export function clampBox(box: PxBox, size: number): PxBox {
  const w = Math.min(Math.max(box.w, 2), size);
  const h = Math.min(Math.max(box.h, 2), size);
  return {
    x: Math.min(Math.max(box.x, 0), size - w),
    y: Math.min(Math.max(box.y, 0), size - h),
    w,
    h,
  };
}

export type Handle =
  | "move"
  | "nw" | "ne" | "sw" | "se"
  | "n" | "s" | "e" | "w";

const HANDLE_SIZE = 8;

/** Which handle (if any) a pointer at px coordinates grabs on a box. */
export function hitTest(box: PxBox, px: number, py: number): Handle | null {
  const near = (a: number, b: number) => Math.abs(a - b) <= HANDLE_SIZE;
  const insideX = px >= box.x - HANDLE_SIZE && px <= box.x + box.w + HANDLE_SIZE;
  const insideY = py >= box.y - HANDLE_SIZE && py <= box.y + box.h + HANDLE_SIZE;
  if (!insideX || !insideY) return null;
  const left = near(px, box.x);
  const right = near(px, box.x + box.w);
  const top = near(py, box.y);
  const bottom = near(py, box.y + box.h);
  if (top && left) return "nw";
  if (top && right) return "ne";
  if (bottom && left) return "sw";
  if (bottom && right) return "se";
  if (top) return "n";
  if (bottom) return "s";
  if (left) return "w";
  if (right) return "e";
  if (px >= box.x && px <= box.x + box.w && py >= box.y && py <= box.y + box.h) return "move";
  return null;
}

export function applyHandleDrag(box: PxBox, handle: Handle, dx: number, dy: number): PxBox {
  let { x, y, w, h } = box;
  switch (handle) {
    case "move":
      x += dx; y += dy; break;
    case "n":
      y += dy; h -= dy; break;
    case "s":
      h += dy; break;
    case "w":
      x += dx; w -= dx; break;
    case "e":
      w += dx; break;
    case "nw":
      x += dx; w -= dx; y += dy; h -= dy; break;
    case "ne":
      w += dx; y += dy; h -= dy; break;
    case "sw":
      x += dx; w -= dx; h += dy; break;
    case "se":
      w += dx; h += dy; break;
  }
  if (w < 0) { x += w; w = -w; }
  if (h < 0) { y += h; h = -h; }
  return { x, y, w, h };
}

/** Max pixel deviation between an element and its re-rendered counterpart. */
export function pixelDeviation(a: LayoutElement, b: LayoutElement, size: number): number {
  const pa = toPixels(a, size);
  const pb = toPixels(b, size);
  return Math.max(
    Math.abs(pa.x - pb.x),
    Math.abs(pa.y - pb.y),
    Math.abs(pa.x + pa.w - (pb.x + pb.w)),
    Math.abs(pa.y + pa.h - (pb.y + pb.h)),
  );
}
