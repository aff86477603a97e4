/** Browser entry point: wires the viewer state to the DOM and WebGL view. */

import { FieldApi } from "./api.js";
import { colorBuffer } from "./colors.js";
import { PointCloudView } from "./render3d.js";
import { Level, ViewerState, parseEmbedding } from "./state.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function serviceUrl(): string {
  const params = new URLSearchParams(window.location.search);
  return params.get("service") ?? "http://127.0.0.1:8080";
}

async function boot(): Promise<void> {
  const api = new FieldApi(serviceUrl());
  const state = new ViewerState(api);
  const canvas = el<HTMLCanvasElement>("viewport");
  canvas.width = canvas.clientWidth;
  canvas.height = canvas.clientHeight;
  const view = new PointCloudView(canvas);

  const banner = el<HTMLDivElement>("banner");
  const summaryLine = el<HTMLDivElement>("summary");
  const selectionPanel = el<HTMLDivElement>("selection");
  const levelSlider = el<HTMLInputElement>("level");
  const levelLabel = el<HTMLSpanElement>("level-label");
  const queryText = el<HTMLInputElement>("query-text");
  const queryEmbedding = el<HTMLTextAreaElement>("query-embedding");
  const querySubmit = el<HTMLButtonElement>("query-submit");
  const retryButton = el<HTMLButtonElement>("retry");
  const strideInput = el<HTMLInputElement>("stride");

  const refreshSubmitState = () => {
    const hasText = queryText.value.trim().length > 0;
    const hasEmbedding = parseEmbedding(queryEmbedding.value) !== null;
    querySubmit.disabled = !(hasText || hasEmbedding);
  };
  queryText.addEventListener("input", refreshSubmitState);
  queryEmbedding.addEventListener("input", refreshSubmitState);
  refreshSubmitState();

  state.onChange(() => {
    banner.textContent = state.banner ? `${state.banner.code ? `[${state.banner.code}] ` : ""}${state.banner.message}` : "";
    banner.className = state.banner ? `banner ${state.banner.kind}` : "banner hidden";
    retryButton.style.display =
      state.banner?.kind === "error" && !state.loaded ? "inline-block" : "none";
    if (state.summary) {
      const counts = state.summary.superpoint_counts;
      summaryLine.textContent =
        `${state.pointCount} / ${state.summary.gp_count} points — ` +
        `S1 ${counts["1"]}, S2 ${counts["2"]}, S3 ${counts["3"]}`;
    }
    levelLabel.textContent = `level ${state.level}`;
    if (state.selection?.kind === "pick") {
      const chain = state.selection.chain;
      selectionPanel.textContent =
        `picked gp ${state.selection.gpIndex} — chain S1:${chain[1]} S2:${chain[2]} S3:${chain[3]}`;
    } else if (state.selection?.kind === "query") {
      const rows = Object.entries(state.selection.perLevel)
        .map(([level, sps]) =>
          `S${level}: ${(sps ?? []).map((s) => `#${s.id} (${s.score.toFixed(3)})`).join(", ")}`)
        .join(" | ");
      selectionPanel.textContent = rows || "query returned nothing";
    } else {
      selectionPanel.textContent = "click a point to inspect the hierarchy";
    }
    const ids = state.ids[state.level];
    if (state.positions && ids) {
      view.setColors(colorBuffer(ids, state.highlightMask(), state.selection !== null));
      view.render();
    }
  });

  levelSlider.addEventListener("input", () => {
    state.setLevel(Number(levelSlider.value) as Level);
  });

  view.onPick = (pointIndex) => {
    if (pointIndex === null) {
      state.clearSelection("click landed on empty space");
      return;
    }
    void state.pickAt(pointIndex);
  };

  querySubmit.addEventListener("click", () => {
    const embedding = parseEmbedding(queryEmbedding.value);
    if (embedding) {
      void state.submitQuery({ embedding }, [state.level]);
    } else if (queryText.value.trim()) {
      void state.submitQuery({ text: queryText.value.trim() }, [state.level]);
    }
  });

  const doLoad = async () => {
    await state.load(Number(strideInput.value) || 1);
    if (state.positions) {
      view.setPoints(state.positions);
      const ids = state.ids[state.level]!;
      view.setColors(colorBuffer(ids, state.highlightMask(), false));
      view.render();
    }
  };
  retryButton.addEventListener("click", () => void doLoad());
  strideInput.addEventListener("change", () => void doLoad());
  await doLoad();
}

void boot();
