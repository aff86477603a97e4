/** Viewer state: everything derives from service responses + user input.
 *
 * The level slider never issues a new pick; it re-resolves the current
 * selection through the cached ancestor chain (built from the per-level
 * id arrays loaded at startup). Stale responses are discarded via
 * request sequence numbers.
 */

import {
  ApiError,
  FieldApi,
  NetworkError,
  PickResponse,
  SelectedSuperpoint,
  Summary,
} from "./api.js";

export type Level = 1 | 2 | 3;
export const LEVELS: Level[] = [1, 2, 3];

export interface PickSelection {
  kind: "pick";
  /** Array index of the picked point in the decimated cloud. */
  pointIndex: number;
  gpIndex: number;
  /** Superpoint id per level, from the pick level up plus local fill-in. */
  chain: Record<Level, number>;
  memberCount: number;
}

export interface QuerySelection {
  kind: "query";
  perLevel: Partial<Record<Level, SelectedSuperpoint[]>>;
}

export type Selection = PickSelection | QuerySelection | null;

export interface BannerState {
  kind: "error" | "hint";
  code?: string;
  message: string;
}

export class ViewerState {
  summary: Summary | null = null;
  positions: Float32Array | null = null;
  ids: Partial<Record<Level, Uint32Array>> = {};
  stride = 1;
  level: Level = 3;
  selection: Selection = null;
  banner: BannerState | null = null;
  loaded = false;

  private pickSeq = 0;
  private querySeq = 0;
  private listeners: Array<() => void> = [];

  constructor(private api: FieldApi) {}

  onChange(listener: () => void): void {
    this.listeners.push(listener);
  }

  private emit(): void {
    for (const listener of this.listeners) listener();
  }

  get pointCount(): number {
    return this.positions ? this.positions.length / 3 : 0;
  }

  async load(stride = 1): Promise<void> {
    this.stride = stride;
    try {
      this.summary = await this.api.summary();
      const byLevel = await Promise.all(
        LEVELS.map((level) => this.api.points(level, stride)),
      );
      this.positions = byLevel[0].positions;
      for (const [i, level] of LEVELS.entries()) {
        this.ids[level] = byLevel[i].ids;
      }
      this.loaded = true;
      this.banner = null;
    } catch (err) {
      this.loaded = false;
      this.banner = {
        kind: "error",
        code: err instanceof ApiError ? err.detail.code : "network",
        message: err instanceof Error ? err.message : String(err),
      };
    }
    this.emit();
  }

  /** Scene gp index of a rendered point (decimation-aware). */
  gpIndexOf(pointIndex: number): number {
    return pointIndex * this.stride;
  }

  /** Pick the rendered point at `pointIndex`; resolves the full chain. */
  async pickAt(pointIndex: number): Promise<void> {
    if (!this.loaded || this.positions === null) return;
    const seq = ++this.pickSeq;
    const base = pointIndex * 3;
    const point = [
      this.positions[base],
      this.positions[base + 1],
      this.positions[base + 2],
    ];
    let response: PickResponse;
    try {
      response = await this.api.pick({ point, level: this.level });
    } catch (err) {
      if (seq !== this.pickSeq) return;
      this.setErrorBanner(err);
      this.emit();
      return;
    }
    if (seq !== this.pickSeq) return; // stale response
    const chain = {} as Record<Level, number>;
    for (const level of LEVELS) {
      const fromServer = response.chain[String(level)];
      chain[level] =
        fromServer !== undefined
          ? fromServer
          : this.ids[level]![pointIndex];
    }
    this.selection = {
      kind: "pick",
      pointIndex,
      gpIndex: response.gp_index,
      chain,
      memberCount: response.member_count,
    };
    this.banner = null;
    this.emit();
  }

  /** Slider move: no request, the cached chain re-resolves the selection. */
  setLevel(level: Level): void {
    this.level = level;
    this.emit();
  }

  clearSelection(hint?: string): void {
    this.selection = null;
    this.banner = hint ? { kind: "hint", message: hint } : null;
    this.emit();
  }

  async submitQuery(
    input: { embedding?: number[]; text?: string; canonicals?: number[][] },
    levels: Level[] = [this.level],
  ): Promise<void> {
    if (!queryInputValid(input)) {
      this.banner = { kind: "hint", message: "enter a query first" };
      this.emit();
      return;
    }
    const seq = ++this.querySeq;
    try {
      const response = await this.api.query({
        ...input,
        levels,
        include_gps: false,
      });
      if (seq !== this.querySeq) return; // stale response
      const perLevel: Partial<Record<Level, SelectedSuperpoint[]>> = {};
      for (const [key, value] of Object.entries(response.selected)) {
        perLevel[Number(key) as Level] = value;
      }
      this.selection = { kind: "query", perLevel };
      this.banner = null;
    } catch (err) {
      if (seq !== this.querySeq) return;
      this.setErrorBanner(err);
    }
    this.emit();
  }

  private setErrorBanner(err: unknown): void {
    if (err instanceof ApiError) {
      this.banner = { kind: "error", code: err.detail.code, message: err.detail.message };
    } else if (err instanceof NetworkError) {
      this.banner = { kind: "error", code: "network", message: err.message };
    } else {
      this.banner = { kind: "error", message: String(err) };
    }
  }

  /** Superpoint ids highlighted at the current level. */
  highlightedSuperpoints(): Set<number> {
    if (this.selection === null) return new Set();
    if (this.selection.kind === "pick") {
      return new Set([this.selection.chain[this.level]]);
    }
    const selected = this.selection.perLevel[this.level];
    return new Set((selected ?? []).map((s) => s.id));
  }

  /** Per-point highlight mask for the current level and selection. */
  highlightMask(): Uint8Array {
    const n = this.pointCount;
    const mask = new Uint8Array(n);
    const ids = this.ids[this.level];
    if (!ids) return mask;
    const chosen = this.highlightedSuperpoints();
    if (chosen.size === 0) return mask;
    for (let i = 0; i < n; i++) {
      if (chosen.has(ids[i])) mask[i] = 1;
    }
    return mask;
  }
}

export function queryInputValid(input: {
  embedding?: number[];
  text?: string;
}): boolean {
  if (input.embedding !== undefined) return input.embedding.length > 0;
  if (input.text !== undefined) return input.text.trim().length > 0;
  return false;
}

/** Parse a pasted embedding: JSON array or whitespace/comma-separated. */
export function parseEmbedding(raw: string): number[] | null {
  const trimmed = raw.trim();
  if (!trimmed) return null;
  let values: number[];
  if (trimmed.startsWith("[")) {
    try {
      const parsed = JSON.parse(trimmed);
      if (!Array.isArray(parsed)) return null;
      values = parsed.map(Number);
    } catch {
      return null;
    }
  } else {
    values = trimmed.split(/[\s,]+/).map(Number);
  }
  return values.every((v) => Number.isFinite(v)) && values.length > 0 ? values : null;
}
