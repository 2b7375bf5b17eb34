// Scene composition and canvas painting. composeScene is pure so the draw
// list is testable without a DOM; Viewer owns the canvas, pan/zoom input and
// tile fetching (placeholder + retry on failure).

import { ApiClient, LevelInfo, SlideInfo } from "./api";
import { OverlayCircle, ViewerSession, Viewport } from "./state";
import { TileCache, TileKey, tileRect, tilesForViewport } from "./tiles";

export interface TileDraw {
  key: TileKey;
  // destination rectangle in screen px
  dx: number;
  dy: number;
  dw: number;
  dh: number;
  ready: boolean; // false -> draw the placeholder
}

export interface CircleDraw {
  id: number;
  x: number; // screen px
  y: number;
  radius: number;
  style: "machine" | "human";
  selected: boolean;
  label: string | null;
}

export interface Scene {
  tiles: TileDraw[];
  circles: CircleDraw[];
  missing: TileKey[]; // tiles that need a fetch
}

export const STYLE_COLORS: Record<"machine" | "human", string> = {
  machine: "#2f80ed", // detector proposals: blue
  human: "#e8590c", // human-added or edited: orange
};

export function composeScene(
  viewport: Viewport,
  level: LevelInfo,
  tileSize: number,
  canvasW: number,
  canvasH: number,
  overlays: OverlayCircle[],
  cache: TileCache<unknown>,
): Scene {
  const tiles: TileDraw[] = [];
  const missing: TileKey[] = [];
  for (const key of tilesForViewport(viewport, level, tileSize, canvasW, canvasH)) {
    const rect = tileRect(key, level, tileSize);
    const entry = cache.get(key);
    const ready = entry?.kind === "ready";
    if (cache.shouldFetch(key)) missing.push(key);
    tiles.push({
      key,
      dx: (rect.x - viewport.x) * viewport.scale,
      dy: (rect.y - viewport.y) * viewport.scale,
      dw: rect.w * viewport.scale,
      dh: rect.h * viewport.scale,
      ready,
    });
  }

  const ds = level.downsample;
  const circles: CircleDraw[] = overlays.map((o) => ({
    id: o.id,
    x: (o.cx / ds - viewport.x) * viewport.scale,
    y: (o.cy / ds - viewport.y) * viewport.scale,
    radius: (o.r / ds) * viewport.scale,
    style: o.style,
    selected: o.selected,
    label: o.classLabel,
  }));

  return { tiles, circles, missing };
}

export class Viewer {
  private cache = new TileCache<ImageBitmap>();
  private rafQueued = false;

  constructor(
    private canvas: HTMLCanvasElement,
    private api: ApiClient,
    private session: ViewerSession,
    private slide: SlideInfo,
  ) {}

  get viewport(): Viewport {
    return this.session.state.viewport;
  }

  levelInfo(): LevelInfo {
    return this.slide.levels[this.viewport.level];
  }

  /** Convert a canvas point to level-0 slide coordinates. */
  toSlide(px: number, py: number): { x: number; y: number } {
    const ds = this.levelInfo().downsample;
    return {
      x: (this.viewport.x + px / this.viewport.scale) * ds,
      y: (this.viewport.y + py / this.viewport.scale) * ds,
    };
  }

  panBy(dxPx: number, dyPx: number): void {
    this.viewport.x -= dxPx / this.viewport.scale;
    this.viewport.y -= dyPx / this.viewport.scale;
    this.scheduleDraw();
  }

  /** Switch pyramid level, keeping the same slide point under the cursor. */
  setLevel(level: number): void {
    const clamped = Math.max(0, Math.min(this.slide.levels.length - 1, level));
    if (clamped === this.viewport.level) return;
    const from = this.slide.levels[this.viewport.level].downsample;
    const to = this.slide.levels[clamped].downsample;
    const factor = from / to;
    this.viewport.x *= factor;
    this.viewport.y *= factor;
    this.viewport.level = clamped;
    this.scheduleDraw();
  }

  scheduleDraw(): void {
    if (this.rafQueued) return;
    this.rafQueued = true;
    requestAnimationFrame(() => {
      this.rafQueued = false;
      void this.draw();
    });
  }

  async draw(): Promise<void> {
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    const scene = composeScene(
      this.viewport,
      this.levelInfo(),
      this.slide.tile_size,
      this.canvas.width,
      this.canvas.height,
      this.session.renderList(),
      this.cache,
    );
    paintScene(ctx, scene, (key) => {
      const entry = this.cache.get(key);
      return entry?.kind === "ready" ? entry.bitmap : null;
    });
    for (const key of scene.missing) this.fetchTile(key);
  }

  private fetchTile(key: TileKey): void {
    this.cache.markPending(key);
    const rect = tileRect(key, this.slide.levels[key.level], this.slide.tile_size);
    const url = this.api.regionUrl(
      this.session.projectId,
      this.slide.slide_id,
      key.level,
      rect.x,
      rect.y,
      rect.w,
      rect.h,
    );
    fetch(url)
      .then(async (resp) => {
        if (!resp.ok) throw new Error(`tile fetch ${resp.status}`);
        const bitmap = await createImageBitmap(await resp.blob());
        this.cache.store(key, bitmap);
        this.scheduleDraw();
      })
      .catch(() => {
        this.cache.markFailed(key);
        setTimeout(() => this.scheduleDraw(), 1000); // retry, bounded by the cache
      });
  }
}

export function paintScene(
  ctx: CanvasRenderingContext2D,
  scene: Scene,
  bitmapFor: (key: TileKey) => ImageBitmap | null,
): void {
  ctx.fillStyle = "#ffffff";
  ctx.fillRect(0, 0, ctx.canvas.width, ctx.canvas.height);
  for (const tile of scene.tiles) {
    const bitmap = tile.ready ? bitmapFor(tile.key) : null;
    if (bitmap) {
      ctx.drawImage(bitmap, tile.dx, tile.dy, tile.dw, tile.dh);
    } else {
      ctx.fillStyle = "#f1f3f5"; // placeholder until the tile arrives
      ctx.fillRect(tile.dx, tile.dy, tile.dw, tile.dh);
    }
  }
  for (const circle of scene.circles) {
    ctx.beginPath();
    ctx.arc(circle.x, circle.y, circle.radius, 0, Math.PI * 2);
    ctx.strokeStyle = STYLE_COLORS[circle.style];
    ctx.lineWidth = circle.selected ? 4 : 2;
    ctx.setLineDash(circle.style === "human" ? [6, 4] : []);
    ctx.stroke();
    ctx.setLineDash([]);
    if (circle.label) {
      ctx.fillStyle = STYLE_COLORS[circle.style];
      ctx.font = "12px sans-serif";
      ctx.fillText(circle.label, circle.x - circle.radius, circle.y - circle.radius - 4);
    }
  }
}
