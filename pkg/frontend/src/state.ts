// Viewer session state. The kept/hidden split always comes from the server's
// filtered endpoint; the client never re-filters, so what the UI renders is
// exactly what the server returned for the active threshold.

import { AnnotationView, ApiClient, SlideView } from "./api";

export type Mode = "REVIEW" | "CLASSIFY";

export interface Viewport {
  level: number;
  x: number; // level coordinates of the canvas top-left
  y: number;
  scale: number; // screen px per level px
}

export interface ViewerState {
  slideId: string;
  viewport: Viewport;
  threshold: number;
  selected: number | null;
  mode: Mode;
  annotations: AnnotationView[]; // the server's kept view at `threshold`
  total: number;
  kept: number;
  revision: number;
  stage: string;
}

export const THRESHOLD_STEP = 0.05;

export function clampThreshold(value: number): number {
  return Math.min(1, Math.max(0, Number(value.toFixed(4))));
}

export interface OverlayCircle {
  id: number;
  cx: number; // level-0 pixels
  cy: number;
  r: number;
  style: "machine" | "human";
  selected: boolean;
  score: number | null;
  classLabel: string | null;
}

export function overlayFor(annotation: AnnotationView, selected: number | null): OverlayCircle {
  return {
    id: annotation.id,
    cx: annotation.cx,
    cy: annotation.cy,
    r: annotation.r,
    style: annotation.provenance === "MACHINE" ? "machine" : "human",
    selected: annotation.id === selected,
    score: annotation.score,
    classLabel: annotation.class_label,
  };
}

export class ViewerSession {
  state: ViewerState;

  constructor(
    readonly api: ApiClient,
    readonly projectId: string,
    slideId: string,
  ) {
    this.state = {
      slideId,
      viewport: { level: 0, x: 0, y: 0, scale: 1 },
      threshold: 0,
      selected: null,
      mode: "REVIEW",
      annotations: [],
      total: 0,
      kept: 0,
      revision: 0,
      stage: "",
    };
  }

  private absorb(view: SlideView): void {
    this.state.annotations = view.annotations;
    this.state.threshold = view.threshold;
    this.state.total = view.total;
    this.state.kept = view.kept;
    this.state.revision = view.revision;
    this.state.stage = view.stage;
    if (this.state.selected !== null && !view.annotations.some((a) => a.id === this.state.selected)) {
      this.state.selected = null;
    }
  }

  /** Fetch the server's filtered view; `threshold` defaults to the active one. */
  async load(threshold?: number): Promise<SlideView> {
    const view = await this.api.getAnnotations(this.projectId, this.state.slideId, threshold);
    this.absorb(view);
    return view;
  }

  /** Move the persisted threshold (slider or Thresh Up/Down buttons). */
  async setThreshold(threshold: number): Promise<SlideView> {
    const view = await this.api.setThreshold(this.projectId, this.state.slideId, clampThreshold(threshold));
    this.absorb(view);
    return view;
  }

  stepThreshold(direction: "UP" | "DOWN", step = THRESHOLD_STEP): Promise<SlideView> {
    const delta = direction === "UP" ? step : -step;
    return this.setThreshold(clampThreshold(this.state.threshold + delta));
  }

  /** Exactly the circles the viewer draws, in draw order. */
  renderList(): OverlayCircle[] {
    return this.state.annotations.map((a) => overlayFor(a, this.state.selected));
  }

  countBadge(): { kept: number; total: number } {
    return { kept: this.state.kept, total: this.state.total };
  }

  select(id: number | null): void {
    this.state.selected = id;
  }

  /** Hit-test in level-0 coordinates; topmost (last drawn) wins. */
  hitTest(x: number, y: number): AnnotationView | null {
    for (let i = this.state.annotations.length - 1; i >= 0; i--) {
      const a = this.state.annotations[i];
      const dx = x - a.cx;
      const dy = y - a.cy;
      if (dx * dx + dy * dy <= a.r * a.r) return a;
    }
    return null;
  }

  absorbView(view: SlideView): void {
    this.absorb(view);
  }
}
