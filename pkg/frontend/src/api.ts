/** Thin fetch wrappers over the service API; no pipeline math lives here. */

import type { Defaults, LayoutForm } from "./state.js";

export interface Meta {
  columns: string[];
  rowCount: number;
  revision: number;
  defaults: Defaults;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public fieldErrors: Record<string, string>,
    message: string,
  ) {
    super(message);
  }
}

async function parseError(resp: Response): Promise<ApiError> {
  let fields: Record<string, string> = {};
  let message = `${resp.status}`;
  try {
    const body = await resp.json();
    if (body.errors) {
      fields = body.errors;
      message = Object.entries(fields)
        .map(([k, v]) => `${k}: ${v}`)
        .join("; ");
    } else if (body.error) {
      message = body.error;
    }
  } catch {
    /* non-JSON body; keep the status text */
  }
  return new ApiError(resp.status, fields, message);
}

export async function fetchMeta(): Promise<Meta> {
  const resp = await fetch("/api/meta");
  if (!resp.ok) throw await parseError(resp);
  return resp.json();
}

export async function fetchImage(url: string): Promise<Blob> {
  const resp = await fetch(url);
  if (!resp.ok) throw await parseError(resp);
  return resp.blob();
}

export async function postLayout(form: LayoutForm): Promise<{ revision: number }> {
  const body: Record<string, number> = {
    iterations: form.iterations,
    lambda: form.lambda,
  };
  if (form.initialTemp !== undefined) body.initial_temp = form.initialTemp;
  if (form.edgeLength !== undefined) body.edge_length = form.edgeLength;
  const resp = await fetch("/api/layout", {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify(body),
  });
  if (!resp.ok) throw await parseError(resp);
  return resp.json();
}

export async function fetchStatus(): Promise<{ revision: number; recomputing: boolean }> {
  const resp = await fetch("/api/status");
  if (!resp.ok) throw await parseError(resp);
  return resp.json();
}
