// Tile grid math and the in-memory tile cache. Regions are requested
// tile-aligned so panning within already-fetched tiles never refetches.

import { LevelInfo } from "./api";
import { Viewport } from "./state";

export interface TileKey {
  level: number;
  row: number;
  col: number;
}

export function tileKeyString(key: TileKey): string {
  return `${key.level}/${key.row}_${key.col}`;
}

export function gridShape(level: LevelInfo, tileSize: number): { rows: number; cols: number } {
  return {
    rows: Math.ceil(level.height / tileSize),
    cols: Math.ceil(level.width / tileSize),
  };
}

/** Tiles covering a canvas of canvasW x canvasH screen px at the viewport. */
export function tilesForViewport(
  viewport: Viewport,
  level: LevelInfo,
  tileSize: number,
  canvasW: number,
  canvasH: number,
): TileKey[] {
  const { rows, cols } = gridShape(level, tileSize);
  const x0 = viewport.x;
  const y0 = viewport.y;
  const x1 = viewport.x + canvasW / viewport.scale;
  const y1 = viewport.y + canvasH / viewport.scale;
  const colLo = Math.max(0, Math.floor(x0 / tileSize));
  const colHi = Math.min(cols - 1, Math.floor((x1 - 1e-9) / tileSize));
  const rowLo = Math.max(0, Math.floor(y0 / tileSize));
  const rowHi = Math.min(rows - 1, Math.floor((y1 - 1e-9) / tileSize));
  const keys: TileKey[] = [];
  for (let row = rowLo; row <= rowHi; row++) {
    for (let col = colLo; col <= colHi; col++) {
      keys.push({ level: viewport.level, row, col });
    }
  }
  return keys;
}

/** The level whose downsample best serves `scale` screen px per level-0 px:
 * the coarsest level still at least as fine as the screen needs. */
export function levelForScale(levels: LevelInfo[], scale: number): number {
  let chosen = 0;
  for (let i = 0; i < levels.length; i++) {
    if (levels[i].downsample <= 1 / Math.max(scale, 1e-9)) chosen = i;
  }
  return chosen;
}

export type TileState<B> = { kind: "ready"; bitmap: B } | { kind: "pending" } | { kind: "failed"; retries: number };

export class TileCache<B = unknown> {
  private entries = new Map<string, TileState<B>>();
  fetches = 0; // total fetch starts, observable for tests

  get(key: TileKey): TileState<B> | undefined {
    return this.entries.get(tileKeyString(key));
  }

  markPending(key: TileKey): void {
    this.fetches += 1;
    this.entries.set(tileKeyString(key), { kind: "pending" });
  }

  store(key: TileKey, bitmap: B): void {
    this.entries.set(tileKeyString(key), { kind: "ready", bitmap });
  }

  markFailed(key: TileKey): void {
    const existing = this.entries.get(tileKeyString(key));
    const retries = existing?.kind === "failed" ? existing.retries + 1 : 0;
    this.entries.set(tileKeyString(key), { kind: "failed", retries });
  }

  /** Failed tiles become fetchable again (bounded retry). */
  shouldFetch(key: TileKey, maxRetries = 3): boolean {
    const entry = this.get(key);
    if (entry === undefined) return true;
    if (entry.kind === "failed") return entry.retries < maxRetries;
    return false;
  }

  clear(): void {
    this.entries.clear();
  }
}

/** Pixel rectangle of one tile, clipped to the level bounds. */
export function tileRect(key: TileKey, level: LevelInfo, tileSize: number): { x: number; y: number; w: number; h: number } {
  const x = key.col * tileSize;
  const y = key.row * tileSize;
  return {
    x,
    y,
    w: Math.min(tileSize, level.width - x),
    h: Math.min(tileSize, level.height - y),
  };
}
