// Pure playground logic: draft state, clamping, pipeline (de)serialization,
// and the latest-wins preview gate. No DOM access here so it is unit-testable.

export interface ParamSchema {
  name: string;
  type: string;
  default: unknown;
  min?: number;
  max?: number;
  choices?: string[];
  required?: boolean;
}

export interface TransformSchema {
  name: string;
  category: string;
  random: boolean;
  invertible: boolean;
  ui: boolean;
  params: ParamSchema[];
}

export interface DraftEntry {
  name: string;
  enabled: boolean;
  params: Record<string, unknown>;
}

export interface SliceState {
  axis: number;
  index: number;
}

export interface PipelineDraft {
  entries: DraftEntry[];
  seed: number;
  slice: SliceState;
}

export type PipelineNode =
  | { type: "compose"; children: PipelineNode[] }
  | { type: "leaf"; name: string; params: Record<string, unknown> };

// widget-editable parameter types; anything else renders read-only
export const EDITABLE_TYPES = new Set([
  "float",
  "int",
  "bool",
  "str",
  "enum",
  "float_pair",
  "int_pair",
  "float_triple",
  "int_triple",
  "axes",
  "axes_empty_ok",
]);

export function uiTransforms(schemas: TransformSchema[]): TransformSchema[] {
  return schemas.filter((s) => s.ui);
}

function clampNumber(value: number, schema: ParamSchema, integer: boolean): number {
  let v = Number.isFinite(value) ? value : Number(schema.min ?? 0);
  if (schema.min !== undefined && v < schema.min) v = schema.min;
  if (schema.max !== undefined && v > schema.max) v = schema.max;
  return integer ? Math.round(v) : v;
}

/** Clamp a candidate value into the server-declared range for its schema.
 *  The UI never sends a parameter outside these bounds. */
export function clampParam(schema: ParamSchema, value: unknown): unknown {
  const t = schema.type;
  if (t === "float" || t === "int") {
    return clampNumber(Number(value), schema, t === "int");
  }
  if (t === "bool") return Boolean(value);
  if (t === "str") return String(value ?? "");
  if (t === "enum") {
    const choices = schema.choices ?? [];
    return choices.includes(String(value)) ? String(value) : schema.default;
  }
  if (t === "float_pair" || t === "int_pair") {
    const integer = t === "int_pair";
    const arr = Array.isArray(value) ? value : [value, value];
    let lo = clampNumber(Number(arr[0]), schema, integer);
    let hi = clampNumber(Number(arr[1] ?? arr[0]), schema, integer);
    if (lo > hi) [lo, hi] = [hi, lo];
    return [lo, hi];
  }
  if (t === "float_triple" || t === "int_triple") {
    const integer = t === "int_triple";
    const arr = Array.isArray(value) ? value : [value, value, value];
    return [0, 1, 2].map((i) => clampNumber(Number(arr[i] ?? arr[0]), schema, integer));
  }
  if (t === "axes" || t === "axes_empty_ok") {
    const arr = Array.isArray(value) ? value : [];
    const axes = [...new Set(arr.map((a) => Math.round(Number(a))))]
      .filter((a) => a === 0 || a === 1 || a === 2)
      .sort();
    if (axes.length === 0 && t === "axes") {
      return Array.isArray(schema.default) ? [...(schema.default as number[])] : [0];
    }
    return axes;
  }
  return value; // read-only types pass through untouched
}

export function defaultParams(schema: TransformSchema): Record<string, unknown> {
  const params: Record<string, unknown> = {};
  for (const p of schema.params) {
    if (p.default !== null && p.default !== undefined) {
      params[p.name] = clampParam(p, structuredClone(p.default));
    }
  }
  return params;
}

export function newEntry(schema: TransformSchema): DraftEntry {
  return { name: schema.name, enabled: true, params: defaultParams(schema) };
}

/** Serialize the draft to the canonical pipeline JSON (enabled entries only). */
export function draftToPipeline(draft: PipelineDraft): PipelineNode {
  return {
    type: "compose",
    children: draft.entries
      .filter((e) => e.enabled)
      .map((e) => ({ type: "leaf" as const, name: e.name, params: { ...e.params } })),
  };
}

export function exportPipelineJson(draft: PipelineDraft): string {
  return JSON.stringify(draftToPipeline(draft), null, 1);
}

/** Parse an exported pipeline back into draft entries (linear composes of
 *  leaves only, which is exactly what the playground exports). Values are
 *  re-clamped against the current schemas. */
export function importPipeline(
  json: string,
  schemas: TransformSchema[]
): DraftEntry[] {
  let obj: unknown;
  try {
    obj = JSON.parse(json);
  } catch {
    throw new Error("not valid JSON");
  }
  const node = obj as PipelineNode;
  if (!node || typeof node !== "object" || node.type !== "compose") {
    throw new Error("expected a top-level compose node");
  }
  const byName = new Map(schemas.map((s) => [s.name, s]));
  const entries: DraftEntry[] = [];
  for (const child of node.children ?? []) {
    if (!child || child.type !== "leaf" || typeof child.name !== "string") {
      throw new Error("playground pipelines contain only leaf children");
    }
    const schema = byName.get(child.name);
    if (!schema) {
      throw new Error(`unknown transform ${child.name}`);
    }
    const params = defaultParams(schema);
    const known = new Map(schema.params.map((p) => [p.name, p]));
    for (const [key, value] of Object.entries(child.params ?? {})) {
      const p = known.get(key);
      if (!p) {
        throw new Error(`unknown parameter ${key} for ${child.name}`);
      }
      params[key] = EDITABLE_TYPES.has(p.type) ? clampParam(p, value) : value;
    }
    entries.push({ name: child.name, enabled: true, params });
  }
  return entries;
}

export function moveEntry(entries: DraftEntry[], from: number, to: number): DraftEntry[] {
  const out = [...entries];
  if (from < 0 || from >= out.length || to < 0 || to >= out.length) return out;
  const [item] = out.splice(from, 1);
  out.splice(to, 0, item);
  return out;
}

/** Latest-wins gate: at most one preview request may publish its result.
 *  begin() invalidates every earlier token. */
export class PreviewGate {
  private counter = 0;

  begin(): number {
    this.counter += 1;
    return this.counter;
  }

  accept(token: number): boolean {
    return token === this.counter;
  }
}

/** Trailing-edge debounce used for the 150 ms preview delay. */
export function debounce<A extends unknown[]>(
  fn: (...args: A) => void,
  ms: number
): (...args: A) => void {
  let handle: ReturnType<typeof setTimeout> | undefined;
  return (...args: A) => {
    if (handle !== undefined) clearTimeout(handle);
    handle = setTimeout(() => fn(...args), ms);
  };
}
