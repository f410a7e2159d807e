// Playground UI: upload a volume, compose a transform pipeline with sliders,
// scrub slices, and iterate on live previews served as PNG slices.

import { ApiError, fetchTransforms, requestPreview, uploadVolume } from "./api.js";
import {
  DraftEntry,
  ParamSchema,
  PipelineDraft,
  PreviewGate,
  TransformSchema,
  clampParam,
  debounce,
  draftToPipeline,
  exportPipelineJson,
  importPipeline,
  moveEntry,
  newEntry,
  uiTransforms,
} from "./model.js";

const state: {
  schemas: TransformSchema[];
  draft: PipelineDraft;
  volumeId: string | null;
  shape: number[] | null;
} = {
  schemas: [],
  draft: { entries: [], seed: 0, slice: { axis: 2, index: 0 } },
  volumeId: null,
  shape: null,
};

const gate = new PreviewGate();

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  ...children: (Node | string)[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) {
    if (k === "class") node.className = v;
    else node.setAttribute(k, v);
  }
  node.append(...children);
  return node;
}

function banner(text: string | null): void {
  const box = document.querySelector("#error-banner") as HTMLElement;
  box.textContent = text ?? "";
  box.style.display = text ? "block" : "none";
}

function setStatus(text: string): void {
  (document.querySelector("#status") as HTMLElement).textContent = text;
}

// -- preview ---------------------------------------------------------------

async function doPreview(): Promise<void> {
  if (!state.volumeId) return;
  const token = gate.begin();
  setStatus("rendering…");
  try {
    const result = await requestPreview(
      state.volumeId,
      draftToPipeline(state.draft),
      state.draft.seed,
      state.draft.slice.axis,
      state.draft.slice.index
    );
    if (!gate.accept(token)) return; // stale response, a newer request exists
    const img = document.querySelector("#preview") as HTMLImageElement;
    const url = URL.createObjectURL(result.blob);
    img.onload = () => URL.revokeObjectURL(url);
    img.src = url;
    banner(null);
    setStatus("ready");
  } catch (err) {
    if (!gate.accept(token)) return;
    setStatus("error");
    if (err instanceof ApiError) {
      banner(`${err.status}: ${err.message}`); // previous image stays visible
    } else {
      banner(String(err));
    }
  }
}

const schedulePreview = debounce(doPreview, 150);

function changed(): void {
  schedulePreview();
}

// -- parameter widgets --------------------------------------------------------

function numberWidget(
  entry: DraftEntry,
  p: ParamSchema,
  integer: boolean
): HTMLElement {
  const value = Number(entry.params[p.name] ?? p.default ?? 0);
  const hasRange = p.min !== undefined && p.max !== undefined;
  const input = el("input", {
    type: hasRange ? "range" : "number",
    value: String(value),
  }) as HTMLInputElement;
  if (p.min !== undefined) input.min = String(p.min);
  if (p.max !== undefined) input.max = String(p.max);
  input.step = integer ? "1" : "any";
  if (hasRange && !integer) input.step = String((Number(p.max) - Number(p.min)) / 200);
  const label = el("span", { class: "value" }, String(value));
  input.oninput = () => {
    const v = clampParam(p, input.value);
    entry.params[p.name] = v;
    label.textContent = String(v);
    changed();
  };
  return el("div", { class: "widget" }, input, label);
}

function pairWidget(entry: DraftEntry, p: ParamSchema, integer: boolean): HTMLElement {
  const current = (entry.params[p.name] as number[]) ?? [0, 0];
  const lo = el("input", { type: "number", value: String(current[0]) }) as HTMLInputElement;
  const hi = el("input", { type: "number", value: String(current[1]) }) as HTMLInputElement;
  for (const input of [lo, hi]) {
    if (p.min !== undefined) input.min = String(p.min);
    if (p.max !== undefined) input.max = String(p.max);
    input.step = integer ? "1" : "any";
    input.onchange = () => {
      const v = clampParam(p, [lo.value, hi.value]) as number[];
      entry.params[p.name] = v;
      lo.value = String(v[0]);
      hi.value = String(v[1]);
      changed();
    };
  }
  return el("div", { class: "widget pair" }, lo, el("span", {}, ".."), hi);
}

function tripleWidget(entry: DraftEntry, p: ParamSchema, integer: boolean): HTMLElement {
  const current = (entry.params[p.name] as number[]) ?? [0, 0, 0];
  const inputs = current.map(
    (v) => el("input", { type: "number", value: String(v) }) as HTMLInputElement
  );
  for (const input of inputs) {
    input.step = integer ? "1" : "any";
    input.onchange = () => {
      const v = clampParam(p, inputs.map((i) => i.value)) as number[];
      entry.params[p.name] = v;
      inputs.forEach((node, i) => (node.value = String(v[i])));
      changed();
    };
  }
  return el("div", { class: "widget pair" }, ...inputs);
}

function axesWidget(entry: DraftEntry, p: ParamSchema): HTMLElement {
  const box = el("div", { class: "widget axes" });
  const current = new Set((entry.params[p.name] as number[]) ?? []);
  for (const axis of [0, 1, 2]) {
    const check = el("input", { type: "checkbox" }) as HTMLInputElement;
    check.checked = current.has(axis);
    check.onchange = () => {
      const picked = [0, 1, 2].filter(
        (a) => (box.querySelectorAll("input")[a] as HTMLInputElement).checked
      );
      const v = clampParam(p, picked) as number[];
      entry.params[p.name] = v;
      [0, 1, 2].forEach(
        (a) => ((box.querySelectorAll("input")[a] as HTMLInputElement).checked = v.includes(a))
      );
      changed();
    };
    box.append(el("label", {}, check, ` ${"xyz"[axis]}`));
  }
  return box;
}

function paramWidget(entry: DraftEntry, p: ParamSchema): HTMLElement {
  const row = el("div", { class: "param" }, el("label", {}, p.name));
  switch (p.type) {
    case "float":
    case "int":
      row.append(numberWidget(entry, p, p.type === "int"));
      break;
    case "float_pair":
    case "int_pair":
      row.append(pairWidget(entry, p, p.type === "int_pair"));
      break;
    case "float_triple":
    case "int_triple":
      row.append(tripleWidget(entry, p, p.type === "int_triple"));
      break;
    case "bool": {
      const check = el("input", { type: "checkbox" }) as HTMLInputElement;
      check.checked = Boolean(entry.params[p.name]);
      check.onchange = () => {
        entry.params[p.name] = check.checked;
        changed();
      };
      row.append(check);
      break;
    }
    case "enum": {
      const select = el("select") as HTMLSelectElement;
      for (const choice of p.choices ?? []) {
        select.append(el("option", { value: choice }, choice));
      }
      select.value = String(entry.params[p.name] ?? p.default);
      select.onchange = () => {
        entry.params[p.name] = clampParam(p, select.value);
        changed();
      };
      row.append(select);
      break;
    }
    case "str": {
      const input = el("input", { type: "text" }) as HTMLInputElement;
      input.value = String(entry.params[p.name] ?? "");
      input.onchange = () => {
        entry.params[p.name] = input.value;
        changed();
      };
      row.append(input);
      break;
    }
    case "axes":
    case "axes_empty_ok":
      row.append(axesWidget(entry, p));
      break;
    default: {
      // unknown parameter type: render read-only with a warning
      const value = entry.params[p.name];
      row.append(
        el("span", { class: "readonly", title: `unsupported type ${p.type}` },
          value === undefined ? "(unset)" : JSON.stringify(value)),
        el("span", { class: "warn" }, " read-only")
      );
    }
  }
  return row;
}

// -- transform panels -----------------------------------------------------------

function renderPipeline(): void {
  const list = document.querySelector("#pipeline") as HTMLElement;
  list.textContent = "";
  if (state.draft.entries.length === 0) {
    list.append(el("p", { class: "hint" }, "No transforms yet. Add one above."));
    return;
  }
  state.draft.entries.forEach((entry, idx) => {
    const schema = state.schemas.find((s) => s.name === entry.name);
    const enable = el("input", { type: "checkbox" }) as HTMLInputElement;
    enable.checked = entry.enabled;
    enable.onchange = () => {
      entry.enabled = enable.checked;
      changed();
    };
    const remove = el("button", { class: "small" }, "✕");
    remove.onclick = () => {
      state.draft.entries.splice(idx, 1);
      renderPipeline();
      changed();
    };
    const summary = el("summary", {}, enable, ` ${entry.name} `, remove);
    const details = el("details", { class: "panel", open: "" }, summary);
    if (!schema) {
      details.append(el("p", { class: "warn" }, "schema mismatch: unknown transform"));
    } else {
      for (const p of schema.params) {
        details.append(paramWidget(entry, p));
      }
    }
    details.draggable = true;
    details.ondragstart = (ev) => ev.dataTransfer?.setData("text/plain", String(idx));
    details.ondragover = (ev) => ev.preventDefault();
    details.ondrop = (ev) => {
      ev.preventDefault();
      const from = Number(ev.dataTransfer?.getData("text/plain"));
      state.draft.entries = moveEntry(state.draft.entries, from, idx);
      renderPipeline();
      changed();
    };
    list.append(details);
  });
}

function buildAddControl(): void {
  const select = document.querySelector("#add-select") as HTMLSelectElement;
  const visible = uiTransforms(state.schemas);
  if (visible.length === 0) {
    (document.querySelector("#pipeline") as HTMLElement).append(
      el("p", { class: "hint" }, "The server reported no transforms.")
    );
    return;
  }
  for (const schema of visible) {
    select.append(el("option", { value: schema.name }, schema.name));
  }
  (document.querySelector("#add-button") as HTMLButtonElement).onclick = () => {
    const schema = state.schemas.find((s) => s.name === select.value);
    if (schema) {
      state.draft.entries.push(newEntry(schema));
      renderPipeline();
      changed();
    }
  };
}

// -- slice / seed controls ---------------------------------------------------------

function updateSliceBounds(): void {
  if (!state.shape) return;
  const slider = document.querySelector("#slice-index") as HTMLInputElement;
  const size = state.shape[state.draft.slice.axis + 1];
  slider.max = String(size - 1);
  if (state.draft.slice.index >= size) {
    state.draft.slice.index = Math.floor(size / 2);
    slider.value = String(state.draft.slice.index);
  }
  (document.querySelector("#slice-label") as HTMLElement).textContent =
    `${"xyz"[state.draft.slice.axis]} = ${state.draft.slice.index}`;
}

function wireControls(): void {
  for (const axis of [0, 1, 2]) {
    const button = document.querySelector(`#axis-${axis}`) as HTMLButtonElement;
    button.onclick = () => {
      state.draft.slice.axis = axis;
      document.querySelectorAll(".axis").forEach((b) => b.classList.remove("active"));
      button.classList.add("active");
      updateSliceBounds();
      changed();
    };
  }
  const slider = document.querySelector("#slice-index") as HTMLInputElement;
  slider.oninput = () => {
    state.draft.slice.index = Number(slider.value);
    updateSliceBounds();
    changed();
  };
  const seed = document.querySelector("#seed") as HTMLInputElement;
  seed.onchange = () => {
    state.draft.seed = Math.round(Number(seed.value)) || 0;
    seed.value = String(state.draft.seed);
    changed();
  };

  (document.querySelector("#upload") as HTMLInputElement).onchange = async (ev) => {
    const input = ev.target as HTMLInputElement;
    const file = input.files?.[0];
    if (!file) return;
    try {
      const info = await uploadVolume(await file.arrayBuffer());
      state.volumeId = info.volume_id;
      state.shape = info.shape;
      state.draft.slice.index = Math.floor(info.shape[state.draft.slice.axis + 1] / 2);
      updateSliceBounds();
      setStatus(
        `volume ${info.volume_id}: shape ${info.shape.join("×")}, spacing ${info.spacing
          .map((s) => s.toFixed(2))
          .join("×")} mm`
      );
      banner(null);
      changed();
    } catch (err) {
      banner(err instanceof ApiError ? `${err.status}: ${err.message}` : String(err));
    }
  };

  (document.querySelector("#export") as HTMLButtonElement).onclick = () => {
    const blob = new Blob([exportPipelineJson(state.draft)], { type: "application/json" });
    const link = el("a", { href: URL.createObjectURL(blob), download: "pipeline.json" });
    link.click();
    URL.revokeObjectURL(link.href);
  };

  (document.querySelector("#import") as HTMLInputElement).onchange = async (ev) => {
    const input = ev.target as HTMLInputElement;
    const file = input.files?.[0];
    if (!file) return;
    try {
      state.draft.entries = importPipeline(await file.text(), state.schemas);
      renderPipeline();
      banner(null);
      changed();
    } catch (err) {
      banner(`import failed: ${err instanceof Error ? err.message : String(err)}`);
    } finally {
      input.value = "";
    }
  };
}

async function start(): Promise<void> {
  wireControls();
  try {
    state.schemas = await fetchTransforms();
  } catch (err) {
    banner(`cannot reach the preview service: ${String(err)}`);
    return;
  }
  buildAddControl();
  renderPipeline();
  setStatus("upload a NIfTI volume to begin");
}

start();
