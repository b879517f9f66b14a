// DOM wiring for the single-page design surface.

import { Client } from "./api.js";
import { downloadName, drawComposite, exportLayoutJson, importLayoutJson } from "./export.js";
import { applyHandleDrag, hitTest, type Handle, type PxBox } from "./geometry.js";
import { drawEditor, drawLayoutBoxes, extractSalbox, metricBadges, type SalientView } from "./render.js";
import {
  addElement,
  applyRefinement,
  beginStream,
  buildRequest,
  editableFields,
  finishGeneration,
  initialState,
  moveElement,
  pixelBox,
  removeElement,
  revertRefinement,
  selectCandidate,
  setTask,
  streamStep,
  toggleAnchor,
  type State,
} from "./state.js";
import { isFinalEvent, type Category, type SampleOut, type Task } from "./types.js";

const SIZE = 512;

const client = new Client("");
let state: State = initialState();
let background: HTMLImageElement | null = null;
let salient: SalientView = { box: null, image: null };
let canvasB64: string | undefined;
let saliencyB64: string | undefined;
let showSaliency = true;
let selectedElement: number | null = null;
let busy = false;

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing #${id}`);
  return el as T;
};

const editor = $("editor") as unknown as HTMLCanvasElement;
const ctx = editor.getContext("2d")!;
editor.width = SIZE;
editor.height = SIZE;

function setState(next: State): void {
  state = next;
  redraw();
}

function redraw(): void {
  drawEditor(ctx, SIZE, background, salient, showSaliency, state, selectedElement);
  renderElementList();
  renderGallery();
  $("status").textContent = busy
    ? "generating..."
    : state.streaming
      ? "streaming"
      : `${state.elements.length} constraint element(s)`;
  ($("generate") as HTMLButtonElement).disabled = busy || !canvasB64;
  const hasSelection = state.selected !== null;
  ($("refine") as HTMLButtonElement).disabled = busy || !hasSelection;
  ($("revert") as HTMLButtonElement).disabled =
    !hasSelection || !state.candidates[state.selected!]?.history.length;
  ($("export-json") as HTMLButtonElement).disabled = !hasSelection;
  ($("export-png") as HTMLButtonElement).disabled = !hasSelection;
}

// ------------------------------------------------------------------ uploads

async function fileToDataUrl(file: File): Promise<string> {
  return new Promise((resolve, reject) => {
    const reader = new FileReader();
    reader.onload = () => resolve(reader.result as string);
    reader.onerror = () => reject(reader.error);
    reader.readAsDataURL(file);
  });
}

function loadImage(dataUrl: string): Promise<HTMLImageElement> {
  return new Promise((resolve, reject) => {
    const img = new Image();
    img.onload = () => resolve(img);
    img.onerror = reject;
    img.src = dataUrl;
  });
}

$("canvas-file").addEventListener("change", async (ev) => {
  const file = (ev.target as HTMLInputElement).files?.[0];
  if (!file) return;
  const url = await fileToDataUrl(file);
  canvasB64 = url.split(",")[1];
  background = await loadImage(url);
  state = { ...state, canvasId: null };
  redraw();
});

$("saliency-file").addEventListener("change", async (ev) => {
  const file = (ev.target as HTMLInputElement).files?.[0];
  if (!file) return;
  const url = await fileToDataUrl(file);
  saliencyB64 = url.split(",")[1];
  const img = await loadImage(url);
  const probe = document.createElement("canvas");
  probe.width = img.naturalWidth;
  probe.height = img.naturalHeight;
  const pctx = probe.getContext("2d")!;
  pctx.drawImage(img, 0, 0);
  const data = pctx.getImageData(0, 0, probe.width, probe.height).data;
  salient = { image: img, box: extractSalbox(data, probe.width, probe.height) };
  state = { ...state, canvasId: null };
  redraw();
});

$("saliency-toggle").addEventListener("change", (ev) => {
  showSaliency = (ev.target as HTMLInputElement).checked;
  redraw();
});

// ------------------------------------------------------------ element panel

function renderElementList(): void {
  const list = $("element-list");
  list.innerHTML = "";
  state.elements.forEach((el, i) => {
    const row = document.createElement("div");
    row.className = "element-row" + (i === selectedElement ? " selected" : "");
    const policy = editableFields(state.task, el.anchored);
    const label = document.createElement("span");
    label.textContent = `${el.category} @ (${el.cx.toFixed(2)}, ${el.cy.toFixed(2)}) ${el.w.toFixed(2)}x${el.h.toFixed(2)}`;
    row.appendChild(label);
    if (policy.anchor) {
      const anchor = document.createElement("button");
      anchor.textContent = el.anchored ? "unanchor" : "anchor";
      anchor.onclick = () => setState(toggleAnchor(state, i));
      row.appendChild(anchor);
    }
    const del = document.createElement("button");
    del.textContent = "x";
    del.onclick = () => {
      if (selectedElement === i) selectedElement = null;
      setState(removeElement(state, i));
    };
    row.appendChild(del);
    row.onclick = () => {
      selectedElement = i;
      redraw();
    };
    list.appendChild(row);
  });
}

($("add-category") as HTMLSelectElement).value = "text";
$("add-element").addEventListener("click", () => {
  const category = ($("add-category") as HTMLSelectElement).value as Category;
  setState(addElement(state, category));
});

$("task").addEventListener("change", (ev) => {
  setState(setTask(state, (ev.target as HTMLSelectElement).value as Task));
});

$("num-samples").addEventListener("change", (ev) => {
  const n = Math.max(1, Math.min(16, Number((ev.target as HTMLInputElement).value)));
  setState({ ...state, numSamples: n });
});

$("seed").addEventListener("change", (ev) => {
  const raw = (ev.target as HTMLInputElement).value.trim();
  setState({ ...state, seed: raw === "" ? null : Number(raw) });
});

// --------------------------------------------------------- canvas dragging

let drag: { index: number; handle: Handle; startX: number; startY: number; box: PxBox } | null = null;

editor.addEventListener("pointerdown", (ev) => {
  const rect = editor.getBoundingClientRect();
  const px = ((ev.clientX - rect.left) / rect.width) * SIZE;
  const py = ((ev.clientY - rect.top) / rect.height) * SIZE;
  for (let i = state.elements.length - 1; i >= 0; i--) {
    const el = state.elements[i];
    const policy = editableFields(state.task, el.anchored);
    const handle = hitTest(pixelBox(el, SIZE), px, py);
    if (!handle) continue;
    selectedElement = i;
    const resizing = handle !== "move";
    if ((resizing && !policy.size) || (!resizing && !policy.position)) {
      redraw(); // selectable but frozen under the current task
      return;
    }
    drag = { index: i, handle, startX: px, startY: py, box: pixelBox(el, SIZE) };
    editor.setPointerCapture(ev.pointerId);
    redraw();
    return;
  }
  selectedElement = null;
  redraw();
});

editor.addEventListener("pointermove", (ev) => {
  if (!drag) return;
  const rect = editor.getBoundingClientRect();
  const px = ((ev.clientX - rect.left) / rect.width) * SIZE;
  const py = ((ev.clientY - rect.top) / rect.height) * SIZE;
  const moved = applyHandleDrag(drag.box, drag.handle, px - drag.startX, py - drag.startY);
  setState(moveElement(state, drag.index, moved, SIZE));
});

editor.addEventListener("pointerup", () => {
  drag = null;
});

// ----------------------------------------------------------- generate flow

$("generate").addEventListener("click", async () => {
  if (busy) return;
  busy = true;
  redraw();
  try {
    const req = buildRequest(state, canvasB64, saliencyB64);
    setState(beginStream(state));
    let streamedFinal: SampleOut | null = null;
    await client.generateStream({ ...req, seed: req.seed ?? Math.floor(Math.random() * 1e9) }, (ev) => {
      if (isFinalEvent(ev)) {
        streamedFinal = { layout: ev.layout, metrics: ev.metrics, seed: ev.seed };
        state = { ...state, canvasId: ev.canvas_id };
      } else {
        setState(streamStep(state, ev.layout));
      }
    });
    let samples: SampleOut[] = streamedFinal ? [streamedFinal] : [];
    let canvasId = state.canvasId;
    if (state.numSamples > 1 && streamedFinal !== null) {
      const first: SampleOut = streamedFinal;
      const rest = await client.generate({
        ...req,
        canvas_id: canvasId ?? undefined,
        num_samples: state.numSamples - 1,
        seed: first.seed + 1,
      });
      samples = [first, ...rest.samples];
      canvasId = rest.canvas_id;
    }
    setState(finishGeneration(state, samples, canvasId));
  } catch (err) {
    $("status").textContent = String(err);
    state = { ...state, streaming: null };
  } finally {
    busy = false;
    redraw();
  }
});

// ------------------------------------------------------------- refine flow

$("refine").addEventListener("click", async () => {
  if (busy || state.selected === null) return;
  busy = true;
  redraw();
  try {
    const candidate = state.candidates[state.selected];
    const strength = Number(($("strength") as HTMLInputElement).value);
    const res = await client.refine({
      layout: candidate.layout,
      strength,
      seed: Math.floor(Math.random() * 1e9),
      canvas_id: state.canvasId ?? undefined,
      canvas_png: state.canvasId ? undefined : canvasB64,
      saliency_png: state.canvasId ? undefined : saliencyB64,
    });
    setState(applyRefinement({ ...state, canvasId: res.canvas_id }, res.samples[0]));
  } catch (err) {
    $("status").textContent = String(err);
  } finally {
    busy = false;
    redraw();
  }
});

$("strength").addEventListener("input", () => {
  $("strength-value").textContent = Number(($("strength") as HTMLInputElement).value).toFixed(2);
});

$("revert").addEventListener("click", () => setState(revertRefinement(state)));

// ----------------------------------------------------------------- gallery

function renderGallery(): void {
  const gallery = $("gallery");
  gallery.innerHTML = "";
  state.candidates.forEach((cand, i) => {
    const card = document.createElement("div");
    card.className = "card" + (i === state.selected ? " selected" : "");
    const thumb = document.createElement("canvas");
    thumb.width = 128;
    thumb.height = 128;
    const tctx = thumb.getContext("2d")!;
    if (background) tctx.drawImage(background, 0, 0, 128, 128);
    else {
      tctx.fillStyle = "#eee";
      tctx.fillRect(0, 0, 128, 128);
    }
    drawLayoutBoxes(tctx, cand.layout, 128);
    card.appendChild(thumb);
    const badges = document.createElement("div");
    badges.className = "badges";
    for (const text of metricBadges(cand.metrics)) {
      const b = document.createElement("span");
      b.textContent = text;
      badges.appendChild(b);
    }
    card.appendChild(badges);
    const seed = document.createElement("div");
    seed.className = "seed";
    seed.textContent = `seed ${cand.seed}` + (cand.history.length ? ` · refined x${cand.history.length}` : "");
    card.appendChild(seed);
    card.onclick = () => setState(selectCandidate(state, i));
    gallery.appendChild(card);
  });
}

// ------------------------------------------------------------------ export

function download(filename: string, blob: Blob): void {
  const url = URL.createObjectURL(blob);
  const a = document.createElement("a");
  a.href = url;
  a.download = filename;
  a.click();
  URL.revokeObjectURL(url);
}

$("export-json").addEventListener("click", () => {
  if (state.selected === null) return;
  const cand = state.candidates[state.selected];
  download(
    downloadName("json", cand.seed),
    new Blob([exportLayoutJson(cand.layout)], { type: "application/json" }),
  );
});

$("export-png").addEventListener("click", () => {
  if (state.selected === null) return;
  const cand = state.candidates[state.selected];
  const out = document.createElement("canvas");
  out.width = SIZE;
  out.height = SIZE;
  const octx = out.getContext("2d")!;
  if (background) octx.drawImage(background, 0, 0, SIZE, SIZE);
  else {
    octx.fillStyle = "#ffffff";
    octx.fillRect(0, 0, SIZE, SIZE);
  }
  drawComposite(octx, cand.layout, SIZE);
  out.toBlob((blob) => {
    if (blob) download(downloadName("png", cand.seed), blob);
  }, "image/png");
});

$("import-json").addEventListener("change", async (ev) => {
  const file = (ev.target as HTMLInputElement).files?.[0];
  if (!file) return;
  try {
    const layout = importLayoutJson(await file.text());
    const pseudo: SampleOut = {
      layout,
      metrics: { occ: 0, rea: 0, und_l: 1, und_s: 1, ove: 0, num_elements: layout.elements.length, num_underlays: 0, num_texts: 0 },
      seed: -1,
    };
    setState(finishGeneration(state, [pseudo], state.canvasId));
  } catch (err) {
    $("status").textContent = `import failed: ${err}`;
  }
});

client
  .health()
  .then((h) => {
    $("status").textContent = h.ready ? "model ready" : "model not loaded";
  })
  .catch(() => {
    $("status").textContent = "service unreachable";
  });

redraw();
