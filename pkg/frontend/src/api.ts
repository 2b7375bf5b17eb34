// Typed client for the loopcurate HTTP API. This module is the UI's only
// write path: annotations are never mutated except through the edits
// endpoint.

export type Provenance = "MACHINE" | "HUMAN_ADDED" | "HUMAN_EDITED";
export type EditKind = "ADD" | "DELETE" | "MOVE" | "RESIZE" | "RECLASSIFY";

export interface CirclePayload {
  cx: number;
  cy: number;
  r: number;
}

export interface AnnotationView {
  id: number;
  cx: number;
  cy: number;
  r: number;
  score: number | null;
  class_label: string | null;
  provenance: Provenance;
  loop_index: number;
}

export interface SlideView {
  slide_id: string;
  loop_index: number;
  stage: string;
  threshold: number;
  revision: number;
  total: number;
  kept: number;
  annotations: AnnotationView[];
}

export interface EditPayload {
  kind: EditKind;
  target_id?: number;
  circle?: CirclePayload;
  class_label?: string;
  timestamp?: string;
}

export interface ClassDef {
  key: string;
  code: string;
  name: string;
}

export interface LevelInfo {
  downsample: number;
  width: number;
  height: number;
}

export interface SlideInfo {
  slide_id: string;
  path: string;
  tile_size: number;
  levels: LevelInfo[];
}

export interface ProjectInfo {
  project_id: string;
  name: string;
  classes: ClassDef[];
  slides: SlideInfo[];
  loops: { loop_index: number; stages: Record<string, string> }[];
}

export interface PatchEntry {
  annotation_id: number;
  patch_file: string;
  origin: [number, number];
  size: number;
  padding_used: number;
}

export interface LabelRecord {
  patch_file: string;
  annotation_id: number;
  class_code: string;
  labeler: string;
  labeled_at: string;
  slide_id: string;
}

export interface ProjectStats {
  project_id: string;
  class_counts: Record<string, number>;
  timing: {
    seconds_per_object: Record<string, number | null>;
    labor_reduction: number | null;
    samples: number;
  };
  curation_diffs: Record<string, Record<string, { added: number; deleted: number; moved: number; unchanged: number }>>;
}

export interface ApiErrorBody {
  code: string;
  message: string;
  location?: string;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly body: ApiErrorBody,
  ) {
    super(`${body.code}: ${body.message}`);
  }

  get isConflict(): boolean {
    return this.status === 409;
  }
}

async function parseError(resp: Response): Promise<never> {
  let body: ApiErrorBody;
  try {
    body = (await resp.json()) as ApiErrorBody;
  } catch {
    body = { code: "http_error", message: resp.statusText };
  }
  throw new ApiError(resp.status, body);
}

export class ApiClient {
  constructor(readonly baseUrl: string = "") {}

  private async getJson<T>(path: string): Promise<T> {
    const resp = await fetch(this.baseUrl + path);
    if (!resp.ok) await parseError(resp);
    return (await resp.json()) as T;
  }

  private async postJson<T>(path: string, body: unknown): Promise<T> {
    const resp = await fetch(this.baseUrl + path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body ?? {}),
    });
    if (!resp.ok) await parseError(resp);
    return (await resp.json()) as T;
  }

  getProject(projectId: string): Promise<ProjectInfo> {
    return this.getJson(`/projects/${projectId}`);
  }

  getAnnotations(projectId: string, slideId: string, threshold?: number): Promise<SlideView> {
    const query = threshold === undefined ? "" : `?threshold=${threshold}`;
    return this.getJson(`/projects/${projectId}/slides/${slideId}/annotations${query}`);
  }

  setThreshold(projectId: string, slideId: string, threshold: number): Promise<SlideView> {
    return this.postJson(`/projects/${projectId}/slides/${slideId}/threshold`, { threshold });
  }

  submitEdits(
    projectId: string,
    slideId: string,
    baseRevision: number,
    edits: EditPayload[],
  ): Promise<SlideView> {
    return this.postJson(`/projects/${projectId}/slides/${slideId}/edits`, {
      base_revision: baseRevision,
      edits,
    });
  }

  finalizeSlide(projectId: string, slideId: string): Promise<SlideView> {
    return this.postJson(`/projects/${projectId}/slides/${slideId}/finalize`, {});
  }

  regionUrl(projectId: string, slideId: string, level: number, x: number, y: number, w: number, h: number): string {
    return `${this.baseUrl}/projects/${projectId}/slides/${slideId}/region?level=${level}&x=${x}&y=${y}&w=${w}&h=${h}`;
  }

  extractPatches(projectId: string, slideId: string, paddingRatio = 0.2): Promise<{ entries: PatchEntry[] }> {
    return this.postJson(`/projects/${projectId}/slides/${slideId}/patches`, { padding_ratio: paddingRatio });
  }

  patchUrl(projectId: string, slideId: string, patchFile: string): string {
    return `${this.baseUrl}/projects/${projectId}/slides/${slideId}/patches/${patchFile}`;
  }

  putLabels(
    projectId: string,
    slideId: string,
    records: { patch_file: string; annotation_id: number; class_code: string; labeler?: string; labeled_at?: string }[],
  ): Promise<{ count: number }> {
    return this.postJson(`/projects/${projectId}/slides/${slideId}/labels`, { records });
  }

  getLabels(projectId: string, slideId: string): Promise<{ records: LabelRecord[] }> {
    return this.getJson(`/projects/${projectId}/slides/${slideId}/labels`);
  }

  getStats(projectId: string): Promise<ProjectStats> {
    return this.getJson(`/projects/${projectId}/stats`);
  }
}
