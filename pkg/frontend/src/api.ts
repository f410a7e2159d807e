// Thin fetch wrappers for the preview service. The playground consumes this
// HTTP API exclusively.

import type { PipelineNode, TransformSchema } from "./model.js";

export interface VolumeInfo {
  volume_id: string;
  shape: number[];
  spacing: number[];
}

export interface PreviewResult {
  blob: Blob;
  previewId: string | null;
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function detail(resp: Response): Promise<string> {
  try {
    const body = await resp.json();
    return typeof body.detail === "string" ? body.detail : JSON.stringify(body);
  } catch {
    return resp.statusText;
  }
}

export async function fetchTransforms(): Promise<TransformSchema[]> {
  const resp = await fetch("/transforms");
  if (!resp.ok) throw new ApiError(resp.status, await detail(resp));
  return resp.json();
}

export async function uploadVolume(data: ArrayBuffer): Promise<VolumeInfo> {
  const resp = await fetch("/volumes", {
    method: "POST",
    body: data,
    headers: { "content-type": "application/octet-stream" },
  });
  if (!resp.ok) throw new ApiError(resp.status, await detail(resp));
  return resp.json();
}

export async function requestPreview(
  volumeId: string,
  pipeline: PipelineNode,
  seed: number,
  axis: number,
  index: number
): Promise<PreviewResult> {
  const resp = await fetch("/preview", {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify({ volume_id: volumeId, pipeline, seed, axis, index }),
  });
  if (!resp.ok) throw new ApiError(resp.status, await detail(resp));
  return { blob: await resp.blob(), previewId: resp.headers.get("X-Preview-Id") };
}
