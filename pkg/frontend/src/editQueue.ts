// Local queue of QA edits, flushed to the server in order as one atomic
// batch. The queue survives a failed flush: on a 409 conflict the edits are
// retained and the session is marked conflicted so the UI can prompt a
// reload; nothing is dropped silently.

import { ApiClient, ApiError, EditPayload, SlideView } from "./api";

export type FlushOutcome =
  | { status: "flushed"; view: SlideView }
  | { status: "empty" }
  | { status: "conflict"; error: ApiError };

export class PendingEditQueue {
  private edits: EditPayload[] = [];
  conflict = false;

  constructor(public baseRevision: number) {}

  get length(): number {
    return this.edits.length;
  }

  get pending(): readonly EditPayload[] {
    return this.edits;
  }

  enqueue(edit: EditPayload): void {
    this.edits.push({ ...edit, timestamp: edit.timestamp ?? new Date().toISOString() });
  }

  addCircle(cx: number, cy: number, r: number): void {
    this.enqueue({ kind: "ADD", circle: { cx, cy, r } });
  }

  deleteAnnotation(id: number): void {
    this.enqueue({ kind: "DELETE", target_id: id });
  }

  moveAnnotation(id: number, cx: number, cy: number, r: number): void {
    this.enqueue({ kind: "MOVE", target_id: id, circle: { cx, cy, r } });
  }

  resizeAnnotation(id: number, cx: number, cy: number, r: number): void {
    this.enqueue({ kind: "RESIZE", target_id: id, circle: { cx, cy, r } });
  }

  reclassify(id: number, classCode: string): void {
    this.enqueue({ kind: "RECLASSIFY", target_id: id, class_label: classCode });
  }

  /** Send the queued edits as one batch; clear only on acknowledgment. */
  async flush(api: ApiClient, projectId: string, slideId: string): Promise<FlushOutcome> {
    if (this.edits.length === 0) return { status: "empty" };
    if (this.conflict) {
      return {
        status: "conflict",
        error: new ApiError(409, { code: "conflict", message: "resolve the revision conflict first" }),
      };
    }
    try {
      const view = await api.submitEdits(projectId, slideId, this.baseRevision, this.edits);
      this.edits = [];
      this.baseRevision = view.revision;
      return { status: "flushed", view };
    } catch (err) {
      if (err instanceof ApiError && err.isConflict) {
        this.conflict = true;
        return { status: "conflict", error: err };
      }
      throw err;
    }
  }

  /** After the user reloads the server state, retry against its revision. */
  rebase(revision: number): void {
    this.baseRevision = revision;
    this.conflict = false;
  }

  discard(): void {
    this.edits = [];
    this.conflict = false;
  }
}
