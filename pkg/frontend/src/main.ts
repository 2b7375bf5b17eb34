// DOM wiring for the QA workbench: tile viewer with circle overlays,
// threshold slider with Thresh Up/Down, edit tools, and classification mode.

import { AnnotationView, ApiClient, SlideInfo } from "./api";
import { ClassifySession } from "./classify";
import { PendingEditQueue } from "./editQueue";
import { ViewerSession } from "./state";
import { levelForScale } from "./tiles";
import { Viewer } from "./viewer";

const params = new URLSearchParams(window.location.search);
const api = new ApiClient(params.get("api") ?? "");
const projectId = params.get("project") ?? "";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const canvas = el<HTMLCanvasElement>("viewer");
const badge = el<HTMLSpanElement>("badge");
const slider = el<HTMLInputElement>("threshold");
const thresholdLabel = el<HTMLSpanElement>("threshold-value");
const statusLine = el<HTMLDivElement>("status");
const conflictBanner = el<HTMLDivElement>("conflict");
const patchImage = el<HTMLImageElement>("patch");
const classifyPanel = el<HTMLDivElement>("classify-panel");
const tallyList = el<HTMLUListElement>("tally");
const hintLine = el<HTMLDivElement>("hint");

interface App {
  session: ViewerSession;
  queue: PendingEditQueue;
  viewer: Viewer;
  slide: SlideInfo;
  classify: ClassifySession | null;
  zoom: number; // screen px per level-0 px
  dragging: { id: number; startX: number; startY: number; orig: AnnotationView } | null;
}

let app: App | null = null;

function setStatus(text: string): void {
  statusLine.textContent = text;
}

function refreshChrome(): void {
  if (!app) return;
  const { kept, total } = app.session.countBadge();
  badge.textContent = `${kept} / ${total} kept`;
  slider.value = String(app.session.state.threshold);
  thresholdLabel.textContent = app.session.state.threshold.toFixed(2);
  el<HTMLSpanElement>("pending").textContent = String(app.queue.length);
  el<HTMLSpanElement>("stage").textContent = app.session.state.stage;
  conflictBanner.hidden = !app.queue.conflict;
  app.viewer.scheduleDraw();
}

async function boot(): Promise<void> {
  if (!projectId) {
    setStatus("open with ?project=<id> (and optionally &slide=<id>, &api=<server>)");
    return;
  }
  const project = await api.getProject(projectId);
  const slide = project.slides.find((s) => s.slide_id === params.get("slide")) ?? project.slides[0];
  if (!slide) {
    setStatus("project has no slides");
    return;
  }
  const session = new ViewerSession(api, projectId, slide.slide_id);
  await session.load();
  const queue = new PendingEditQueue(session.state.revision);
  const viewer = new Viewer(canvas, api, session, slide);
  const zoom = Math.min(canvas.width / slide.levels[0].width, canvas.height / slide.levels[0].height);
  app = { session, queue, viewer, slide, classify: null, zoom, dragging: null };
  applyZoom(zoom, canvas.width / 2, canvas.height / 2);
  setStatus(`${project.name}: ${slide.slide_id} (${slide.levels[0].width}x${slide.levels[0].height})`);

  document.title = `loopcurate: ${slide.slide_id}`;
  for (const cls of project.classes) {
    const item = document.createElement("li");
    item.textContent = `[${cls.key}] ${cls.code} - ${cls.name}`;
    el<HTMLUListElement>("class-list").appendChild(item);
  }
  refreshChrome();
}

function applyZoom(zoom: number, anchorPx: number, anchorPy: number): void {
  if (!app) return;
  const before = app.viewer.toSlide(anchorPx, anchorPy);
  app.zoom = Math.min(4, Math.max(0.01, zoom));
  const level = levelForScale(app.slide.levels, app.zoom);
  const ds = app.slide.levels[level].downsample;
  app.session.state.viewport.level = level;
  app.session.state.viewport.scale = app.zoom * ds;
  app.session.state.viewport.x = before.x / ds - anchorPx / app.session.state.viewport.scale;
  app.session.state.viewport.y = before.y / ds - anchorPy / app.session.state.viewport.scale;
  app.viewer.scheduleDraw();
}

// ---- review-mode interactions ----

canvas.addEventListener("wheel", (event) => {
  event.preventDefault();
  if (!app) return;
  const factor = event.deltaY < 0 ? 1.2 : 1 / 1.2;
  applyZoom(app.zoom * factor, event.offsetX, event.offsetY);
});

canvas.addEventListener("mousedown", (event) => {
  if (!app || app.session.state.mode !== "REVIEW") return;
  const point = app.viewer.toSlide(event.offsetX, event.offsetY);
  const hit = app.session.hitTest(point.x, point.y);
  app.session.select(hit?.id ?? null);
  if (hit && event.shiftKey) {
    app.dragging = { id: hit.id, startX: point.x, startY: point.y, orig: hit };
  }
  refreshChrome();
});

canvas.addEventListener("mousemove", (event) => {
  if (!app) return;
  if (app.dragging) return; // geometry preview is applied on mouseup
  if (event.buttons === 1 && app.session.state.mode === "REVIEW" && !event.shiftKey) {
    app.viewer.panBy(event.movementX, event.movementY);
  }
});

canvas.addEventListener("mouseup", (event) => {
  if (!app || !app.dragging) return;
  const point = app.viewer.toSlide(event.offsetX, event.offsetY);
  const { orig } = app.dragging;
  app.queue.moveAnnotation(orig.id, orig.cx + (point.x - app.dragging.startX), orig.cy + (point.y - app.dragging.startY), orig.r);
  app.dragging = null;
  void flushEdits();
});

canvas.addEventListener("dblclick", (event) => {
  if (!app || app.session.state.mode !== "REVIEW") return;
  const point = app.viewer.toSlide(event.offsetX, event.offsetY);
  const radius = Number(el<HTMLInputElement>("add-radius").value) || 40;
  app.queue.addCircle(point.x, point.y, radius);
  void flushEdits();
});

document.addEventListener("keydown", (event) => {
  if (!app) return;
  if (app.session.state.mode === "CLASSIFY") {
    if (event.key.length === 1 && app.classify) {
      void app.classify.pressKey(event.key).then(() => renderClassify());
    }
    return;
  }
  if ((event.key === "Delete" || event.key === "d") && app.session.state.selected !== null) {
    app.queue.deleteAnnotation(app.session.state.selected);
    void flushEdits();
  }
});

async function flushEdits(): Promise<void> {
  if (!app) return;
  const outcome = await app.queue.flush(api, projectId, app.session.state.slideId);
  if (outcome.status === "flushed") {
    app.session.absorbView(outcome.view);
  } else if (outcome.status === "conflict") {
    setStatus("edit conflict: another session changed this slide");
  }
  refreshChrome();
}

el<HTMLButtonElement>("flush").addEventListener("click", () => void flushEdits());

el<HTMLButtonElement>("reload").addEventListener("click", () => {
  if (!app) return;
  void app.session.load().then(() => {
    app!.queue.rebase(app!.session.state.revision);
    refreshChrome();
  });
});

// ---- threshold controls ----

slider.addEventListener("change", () => {
  if (!app) return;
  void app.session.setThreshold(Number(slider.value)).then(refreshChrome);
});

el<HTMLButtonElement>("thresh-up").addEventListener("click", () => {
  if (!app) return;
  void app.session.stepThreshold("UP").then(refreshChrome);
});

el<HTMLButtonElement>("thresh-down").addEventListener("click", () => {
  if (!app) return;
  void app.session.stepThreshold("DOWN").then(refreshChrome);
});

// ---- classification mode ----

function renderClassify(): void {
  if (!app?.classify) return;
  const view = app.classify.view();
  hintLine.textContent = view.hint ?? "";
  tallyList.replaceChildren(
    ...Object.entries(app.classify.tallies()).map(([code, count]) => {
      const item = document.createElement("li");
      item.textContent = `${code}: ${count}`;
      return item;
    }),
  );
  el<HTMLSpanElement>("classify-progress").textContent = `${view.done} / ${view.totalPatches} labeled`;
  if (view.patch) {
    patchImage.src = api.patchUrl(projectId, app.session.state.slideId, view.patch.patch_file);
    patchImage.hidden = false;
  } else {
    patchImage.hidden = true;
    hintLine.textContent = "all patches labeled";
  }
}

el<HTMLButtonElement>("mode-toggle").addEventListener("click", async () => {
  if (!app) return;
  if (app.session.state.mode === "REVIEW") {
    app.session.state.mode = "CLASSIFY";
    classifyPanel.hidden = false;
    const project = await api.getProject(projectId);
    app.classify = new ClassifySession(api, projectId, app.session.state.slideId, project.classes, "ui");
    await app.classify.start();
    renderClassify();
  } else {
    app.session.state.mode = "REVIEW";
    classifyPanel.hidden = true;
  }
  el<HTMLButtonElement>("mode-toggle").textContent =
    app.session.state.mode === "REVIEW" ? "Classify patches" : "Back to review";
});

void boot();
