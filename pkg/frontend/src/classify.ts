// Patch classification mode: one patch at a time, class hotkeys from the
// project's class config, auto-advance to the next unlabeled patch. A
// relabel simply posts again; the server keeps the latest record per patch.

import { ApiClient, ClassDef, PatchEntry } from "./api";

export interface ClassifyView {
  patch: PatchEntry | null;
  done: number;
  totalPatches: number;
  hint: string | null;
}

export class ClassifySession {
  patches: PatchEntry[] = [];
  labels = new Map<string, string>(); // patch_file -> class_code
  index = 0;
  hint: string | null = null;

  constructor(
    readonly api: ApiClient,
    readonly projectId: string,
    readonly slideId: string,
    readonly classes: ClassDef[],
    readonly labeler = "anonymous",
  ) {}

  async start(paddingRatio = 0.2): Promise<void> {
    const { entries } = await this.api.extractPatches(this.projectId, this.slideId, paddingRatio);
    this.patches = entries;
    const { records } = await this.api.getLabels(this.projectId, this.slideId);
    for (const record of records) this.labels.set(record.patch_file, record.class_code);
    this.index = this.firstUnlabeled();
  }

  private firstUnlabeled(): number {
    const at = this.patches.findIndex((p) => !this.labels.has(p.patch_file));
    return at === -1 ? this.patches.length : at;
  }

  current(): PatchEntry | null {
    return this.index < this.patches.length ? this.patches[this.index] : null;
  }

  classFor(key: string): ClassDef | null {
    return this.classes.find((c) => c.key === key) ?? null;
  }

  /** Handle a key press; unmapped keys are a no-op that only sets a hint. */
  async pressKey(key: string): Promise<ClassifyView> {
    const patch = this.current();
    if (patch === null) return this.view();
    const cls = this.classFor(key);
    if (cls === null) {
      this.hint = `no class bound to "${key}" (try: ${this.classes.map((c) => c.key).join(", ")})`;
      return this.view();
    }
    this.hint = null;
    await this.api.putLabels(this.projectId, this.slideId, [
      {
        patch_file: patch.patch_file,
        annotation_id: patch.annotation_id,
        class_code: cls.code,
        labeler: this.labeler,
        labeled_at: new Date().toISOString(),
      },
    ]);
    this.labels.set(patch.patch_file, cls.code);
    this.advance();
    return this.view();
  }

  /** Jump to the next unlabeled patch at or after the current position. */
  private advance(): void {
    for (let i = this.index + 1; i < this.patches.length; i++) {
      if (!this.labels.has(this.patches[i].patch_file)) {
        this.index = i;
        return;
      }
    }
    this.index = this.firstUnlabeled();
  }

  goTo(index: number): void {
    this.index = Math.max(0, Math.min(this.patches.length - 1, index));
  }

  /** Per-class tallies over everything this session knows is labeled. */
  tallies(): Record<string, number> {
    const counts: Record<string, number> = {};
    for (const code of this.labels.values()) counts[code] = (counts[code] ?? 0) + 1;
    return counts;
  }

  view(): ClassifyView {
    return {
      patch: this.current(),
      done: this.labels.size,
      totalPatches: this.patches.length,
      hint: this.hint,
    };
  }
}
