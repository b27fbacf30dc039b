/** DOM wiring: controls on the left, the live rendered plot on the right.
 * All numeric work happens server-side; this file only moves state around. */

import { ApiError, fetchImage, fetchMeta, fetchStatus, postLayout } from "./api.js";
import { debounce } from "./debounce.js";
import { LatestGate } from "./latest.js";
import {
  clampAlpha,
  cycleDim,
  effectiveAlpha,
  initialState,
  modeAllowed,
  renderUrl,
  validateLayoutForm,
  variantAllowed,
} from "./state.js";

const REFRESH_DEBOUNCE_MS = 120;
const STATUS_POLL_MS = 250;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  ...children: (Node | string)[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  node.append(...children);
  return node;
}

function radioGroup(
  name: string,
  options: string[],
  current: string,
  onChange: (value: string) => void,
): HTMLElement {
  const box = el("div", { class: "radio-group", id: `group-${name}` });
  for (const opt of options) {
    const input = el("input", {
      type: "radio",
      name,
      value: opt,
      id: `${name}-${opt}`,
    }) as HTMLInputElement;
    input.checked = opt === current;
    input.addEventListener("change", () => onChange(opt));
    box.append(el("label", { for: `${name}-${opt}` }, input, opt));
  }
  return box;
}

async function boot(root: HTMLElement): Promise<void> {
  const meta = await fetchMeta();
  const defaults = meta.defaults;
  const state = initialState(defaults, meta.columns[0] ?? "projection");
  state.lastRevision = meta.revision;

  const img = el("img", { id: "plot", alt: "rendered plot" }) as HTMLImageElement;
  const errorBox = el("div", { id: "error", class: "error" });
  const statusLine = el("div", { id: "status" });
  const gate = new LatestGate();
  let lastObjectUrl: string | null = null;

  function showError(err: unknown): void {
    errorBox.textContent =
      err instanceof ApiError ? err.message : err instanceof Error ? err.message : String(err);
  }

  async function refreshNow(): Promise<void> {
    const ticket = gate.take();
    const url = renderUrl(state, defaults);
    try {
      const blob = await fetchImage(url);
      if (!gate.isCurrent(ticket)) return; // a newer request superseded us
      const objectUrl = URL.createObjectURL(blob);
      img.src = objectUrl;
      if (lastObjectUrl) URL.revokeObjectURL(lastObjectUrl);
      lastObjectUrl = objectUrl;
      errorBox.textContent = "";
      statusLine.textContent =
        `${state.selectedDim} | ${state.variant}/${state.mode} | ` +
        `alpha ${effectiveAlpha(state, defaults).toFixed(2)} | relax ${state.relax.toFixed(2)}`;
    } catch (err) {
      if (gate.isCurrent(ticket)) showError(err);
    }
  }

  const refresh = debounce<void>(() => void refreshNow(), REFRESH_DEBOUNCE_MS);

  // Dimension selector plus arrow-key cycling.
  const dimSelect = el("select", { id: "dim" }) as HTMLSelectElement;
  for (const name of ["projection", ...meta.columns]) {
    dimSelect.append(el("option", { value: name }, name));
  }
  dimSelect.value = state.selectedDim;

  function applyDim(value: string): void {
    state.selectedDim = value;
    dimSelect.value = value;
    // Fall back from combinations the server would reject.
    if (!variantAllowed(state.variant, value)) {
      state.variant = "affine";
      syncRadios("variant", state.variant);
    }
    if (!modeAllowed(state.mode, value)) {
      state.mode = "contour";
      syncRadios("mode", state.mode);
    }
    updateDisabled();
    refresh();
  }

  dimSelect.addEventListener("change", () => applyDim(dimSelect.value));
  document.addEventListener("keydown", (ev) => {
    if (ev.key === "ArrowRight") applyDim(cycleDim(meta.columns, state.selectedDim, 1));
    if (ev.key === "ArrowLeft") applyDim(cycleDim(meta.columns, state.selectedDim, -1));
  });

  function syncRadios(name: string, value: string): void {
    const input = document.getElementById(`${name}-${value}`) as HTMLInputElement | null;
    if (input) input.checked = true;
  }

  function updateDisabled(): void {
    for (const v of defaults.variants) {
      const input = document.getElementById(`variant-${v}`) as HTMLInputElement | null;
      if (input) input.disabled = !variantAllowed(v, state.selectedDim);
    }
    for (const m of defaults.modes) {
      const input = document.getElementById(`mode-${m}`) as HTMLInputElement | null;
      if (input) input.disabled = !modeAllowed(m, state.selectedDim);
    }
  }

  const variantBox = radioGroup("variant", defaults.variants, state.variant, (v) => {
    state.variant = v;
    alphaSlider.value = effectiveAlpha(state, defaults).toString();
    alphaLabel.textContent = alphaSlider.value;
    refresh();
  });
  const modeBox = radioGroup("mode", defaults.modes, state.mode, (m) => {
    state.mode = m;
    refresh();
  });

  // Alpha slider: clamped to the advertised range, so no invalid request
  // can even be issued from here.
  const alphaSlider = el("input", {
    type: "range", id: "alpha",
    min: defaults.alpha.min.toString(),
    max: defaults.alpha.max.toString(),
    step: "0.05",
    value: effectiveAlpha(state, defaults).toString(),
  }) as HTMLInputElement;
  const alphaLabel = el("span", { class: "value" }, alphaSlider.value);
  alphaSlider.addEventListener("input", () => {
    state.alpha = clampAlpha(parseFloat(alphaSlider.value), defaults);
    alphaLabel.textContent = state.alpha.toFixed(2);
    refresh();
  });

  const relaxSlider = el("input", {
    type: "range", id: "relax", min: "0", max: "1", step: "0.01",
    value: state.relax.toString(),
  }) as HTMLInputElement;
  const relaxLabel = el("span", { class: "value" }, state.relax.toFixed(2));
  relaxSlider.addEventListener("input", () => {
    state.relax = Math.min(1, Math.max(0, parseFloat(relaxSlider.value)));
    relaxLabel.textContent = state.relax.toFixed(2);
    refresh();
  });

  // Layout recompute form: client-side validation, 409-safe button.
  const itersInput = el("input", {
    type: "number", id: "iterations", value: defaults.layout.iterations.toString(),
  }) as HTMLInputElement;
  const lambdaInput = el("input", {
    type: "number", id: "lambda", step: "0.001", value: defaults.layout.lambda.toString(),
  }) as HTMLInputElement;
  const layoutError = el("div", { class: "error", id: "layout-error" });
  const recomputeBtn = el("button", { id: "recompute" }, "Recompute layout") as HTMLButtonElement;

  let recomputeInFlight = false;

  recomputeBtn.addEventListener("click", async () => {
    if (recomputeInFlight) return;
    const form = {
      iterations: parseInt(itersInput.value, 10),
      lambda: parseFloat(lambdaInput.value),
    };
    const errors = validateLayoutForm(form);
    if (Object.keys(errors).length > 0) {
      layoutError.textContent = Object.values(errors).join("; ");
      return;
    }
    layoutError.textContent = "";
    recomputeInFlight = true;
    recomputeBtn.disabled = true;
    setControlsDisabled(true);
    try {
      const accepted = await postLayout(form);
      // Poll until the new revision is live, then re-render.
      for (;;) {
        const status = await fetchStatus();
        if (!status.recomputing && status.revision >= accepted.revision) {
          state.lastRevision = status.revision;
          break;
        }
        await new Promise((resolve) => setTimeout(resolve, STATUS_POLL_MS));
      }
      await refreshNow();
    } catch (err) {
      showError(err);
    } finally {
      recomputeInFlight = false;
      recomputeBtn.disabled = false;
      setControlsDisabled(false);
      updateDisabled();
    }
  });

  function setControlsDisabled(disabled: boolean): void {
    for (const node of [dimSelect, alphaSlider, relaxSlider, itersInput, lambdaInput]) {
      node.disabled = disabled;
    }
    root.querySelectorAll<HTMLInputElement>("input[type=radio]").forEach((input) => {
      input.disabled = disabled;
    });
  }

  const controls = el(
    "div",
    { id: "controls" },
    el("h1", {}, "mdcontour"),
    el("div", {}, `${meta.rowCount} rows`),
    el("fieldset", {}, el("legend", {}, "dimension"), dimSelect,
      el("small", {}, " (left/right arrows cycle)")),
    el("fieldset", {}, el("legend", {}, "variant"), variantBox),
    el("fieldset", {}, el("legend", {}, "mode"), modeBox),
    el("fieldset", {}, el("legend", {}, "alpha"), alphaSlider, alphaLabel),
    el("fieldset", {}, el("legend", {}, "relax"), relaxSlider, relaxLabel),
    el(
      "fieldset",
      {},
      el("legend", {}, "layout"),
      el("label", {}, "iterations ", itersInput),
      el("label", {}, "decay ", lambdaInput),
      recomputeBtn,
      layoutError,
    ),
    errorBox,
    statusLine,
  );

  root.append(controls, el("div", { id: "view" }, img));
  updateDisabled();
  await refreshNow();
}

const rootEl = document.getElementById("app");
if (rootEl) {
  boot(rootEl).catch((err) => {
    rootEl.textContent = `failed to start viewer: ${err}`;
  });
}
