/** Scripted end-to-end run against a live field service.
 *
 * Launch via scripts/integration.sh, which builds the fixture field,
 * starts `superfield serve` (with a dead embedder URL so the
 * embedder-down path is exercised) and sets SUPERFIELD_SERVICE_URL /
 * SUPERFIELD_EXPECTED before invoking vitest.
 */

import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";

import { FieldApi } from "../src/api.js";
import { ViewerState } from "../src/state.js";

const serviceUrl = process.env.SUPERFIELD_SERVICE_URL;
const expectedPath = process.env.SUPERFIELD_EXPECTED;

interface Expected {
  gp_count: number;
  pick_gp: number;
  object_s3_members: number[];
  query_embedding: number[];
  canonicals: number[][];
}

const run = serviceUrl && expectedPath ? describe : describe.skip;

run("explorer against the fixture service", () => {
  const expected: Expected = JSON.parse(readFileSync(expectedPath!, "utf8"));

  async function loadedState(): Promise<ViewerState> {
    const state = new ViewerState(new FieldApi(serviceUrl!));
    await state.load(1);
    expect(state.loaded).toBe(true);
    return state;
  }

  function highlightedGps(state: ViewerState): number[] {
    const mask = state.highlightMask();
    const out: number[] = [];
    for (let i = 0; i < mask.length; i++) {
      if (mask[i]) out.push(state.gpIndexOf(i));
    }
    return out;
  }

  it("shows the service's point count", async () => {
    const state = await loadedState();
    expect(state.pointCount).toBe(expected.gp_count);
    expect(state.summary?.gp_count).toBe(expected.gp_count);
  });

  it("pick at level 1 then slider to level 3 highlights exactly object 2", async () => {
    const state = await loadedState();
    state.setLevel(1);
    await state.pickAt(expected.pick_gp); // stride 1: point index == gp index
    expect(state.selection?.kind).toBe("pick");
    state.setLevel(3); // no further /pick request
    expect(highlightedGps(state)).toEqual(expected.object_s3_members);
  });

  it("a pasted one-hot query tints exactly one object", async () => {
    const state = await loadedState();
    state.setLevel(3);
    await state.submitQuery(
      { embedding: expected.query_embedding, canonicals: expected.canonicals },
      [3],
    );
    expect(state.selection?.kind).toBe("query");
    expect(state.highlightedSuperpoints().size).toBe(1);
    expect(highlightedGps(state)).toEqual(expected.object_s3_members);
  });

  it("embedder-down text query surfaces the structured error", async () => {
    const state = await loadedState();
    await state.submitQuery({ text: "anything at all" }, [3]);
    expect(state.banner?.kind).toBe("error");
    expect(state.banner?.code).toBe("embedder_unreachable");
  });
});
