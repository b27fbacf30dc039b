/** Viewer state and the pure helpers behind the controls. */

export interface AlphaRange {
  min: number;
  max: number;
  perVariant: Record<string, number>;
}

export interface Defaults {
  variants: string[];
  modes: string[];
  alpha: AlphaRange;
  relax: { min: number; max: number; default: number };
  resolution: { default: [number, number]; max: number };
  variant: string;
  mode: string;
  layout: {
    iterations: number;
    lambda: number;
    initialTemp: number;
    edgeLength: number;
  };
}

export interface ViewerState {
  alpha: number | null; // null: use the server's per-variant default
  relax: number;
  variant: string;
  mode: string;
  selectedDim: string; // column name or "projection"
  width: number;
  height: number;
  lastRevision: number;
}

export function initialState(defaults: Defaults, firstDim: string): ViewerState {
  return {
    alpha: null,
    relax: defaults.relax.default,
    variant: defaults.variant,
    mode: defaults.mode,
    selectedDim: firstDim,
    width: defaults.resolution.default[0],
    height: defaults.resolution.default[1],
    lastRevision: 0,
  };
}

export function clamp(value: number, lo: number, hi: number): number {
  return Math.min(hi, Math.max(lo, value));
}

export function clampAlpha(value: number, d: Defaults): number {
  return clamp(value, d.alpha.min, d.alpha.max);
}

export function effectiveAlpha(s: ViewerState, d: Defaults): number {
  return s.alpha ?? d.alpha.perVariant[s.variant] ?? 1.0;
}

/** The render endpoint query for a state; key order is fixed so equal states
 * produce equal URLs (and the browser cache can help). */
export function renderUrl(s: ViewerState, d: Defaults): string {
  const q = new URLSearchParams();
  q.set("dim", s.selectedDim);
  q.set("variant", s.variant);
  q.set("alpha", effectiveAlpha(s, d).toString());
  q.set("relax", s.relax.toString());
  q.set("mode", s.mode);
  q.set("w", s.width.toString());
  q.set("h", s.height.toString());
  return `/api/render.png?${q.toString()}`;
}

/** Step through "projection" plus the data dimensions, wrapping around. */
export function cycleDim(dims: string[], current: string, delta: number): string {
  const ring = ["projection", ...dims];
  const idx = ring.indexOf(current);
  const next = ((idx < 0 ? 0 : idx) + delta + ring.length) % ring.length;
  return ring[next];
}

/** Rigid MLS cannot target a single dimension; gradient needs two. */
export function variantAllowed(variant: string, selectedDim: string): boolean {
  return !(variant === "rigid" && selectedDim !== "projection");
}

export function modeAllowed(mode: string, selectedDim: string): boolean {
  return !(mode === "gradient" && selectedDim !== "projection");
}

export interface LayoutForm {
  iterations: number;
  lambda: number;
  initialTemp?: number;
  edgeLength?: number;
}

/** Returns a per-field error map; empty object means the form may be sent. */
export function validateLayoutForm(form: LayoutForm): Record<string, string> {
  const errors: Record<string, string> = {};
  if (!Number.isFinite(form.iterations) || form.iterations < 0 || form.iterations > 100000) {
    errors.iterations = "iterations must be between 0 and 100000";
  }
  if (!Number.isFinite(form.lambda) || form.lambda <= 0 || form.lambda >= 1) {
    errors.lambda = "decay must lie strictly between 0 and 1";
  }
  if (form.initialTemp !== undefined && !(form.initialTemp > 0)) {
    errors.initialTemp = "temperature must be positive";
  }
  if (form.edgeLength !== undefined && !(form.edgeLength > 0)) {
    errors.edgeLength = "edge length must be positive";
  }
  return errors;
}
