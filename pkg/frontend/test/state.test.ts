import { describe, expect, it } from "vitest";

import {
  Defaults,
  clampAlpha,
  cycleDim,
  effectiveAlpha,
  initialState,
  modeAllowed,
  renderUrl,
  validateLayoutForm,
  variantAllowed,
} from "../src/state.js";

const defaults: Defaults = {
  variants: ["linear", "mean", "affine", "rigid"],
  modes: ["contour", "discrete", "discrete+contour", "adaptive", "gradient", "texture"],
  alpha: { min: 0.25, max: 3.0, perVariant: { mean: 1.0, rigid: 1.0, affine: 1.5, linear: 1.0 } },
  relax: { min: 0, max: 1, default: 1 },
  resolution: { default: [320, 320], max: 8192 },
  variant: "affine",
  mode: "contour",
  layout: { iterations: 500, lambda: 0.99, initialTemp: 1, edgeLength: 1 },
};

describe("alpha clamping", () => {
  it("clamps below and above the advertised range", () => {
    expect(clampAlpha(0.01, defaults)).toBe(0.25);
    expect(clampAlpha(7.0, defaults)).toBe(3.0);
    expect(clampAlpha(1.2, defaults)).toBe(1.2);
  });

  it("falls back to the per-variant default when unset", () => {
    const s = initialState(defaults, "mpg");
    expect(effectiveAlpha(s, defaults)).toBe(1.5);
    s.variant = "mean";
    expect(effectiveAlpha(s, defaults)).toBe(1.0);
  });
});

describe("renderUrl", () => {
  it("includes every control and is stable for equal states", () => {
    const s = initialState(defaults, "mpg");
    s.relax = 0.8;
    const url = renderUrl(s, defaults);
    expect(url).toContain("/api/render.png?");
    expect(url).toContain("dim=mpg");
    expect(url).toContain("variant=affine");
    expect(url).toContain("alpha=1.5");
    expect(url).toContain("relax=0.8");
    expect(url).toContain("mode=contour");
    expect(url).toContain("w=320");
    expect(renderUrl(s, defaults)).toBe(url);
  });

  it("escapes awkward column names", () => {
    const s = initialState(defaults, "weight (lbs)");
    expect(renderUrl(s, defaults)).toContain("dim=weight+%28lbs%29");
  });
});

describe("cycleDim", () => {
  const dims = ["mpg", "hp", "weight"];

  it("wraps forward through projection and all dimensions", () => {
    expect(cycleDim(dims, "projection", 1)).toBe("mpg");
    expect(cycleDim(dims, "weight", 1)).toBe("projection");
  });

  it("wraps backward", () => {
    expect(cycleDim(dims, "projection", -1)).toBe("weight");
    expect(cycleDim(dims, "mpg", -1)).toBe("projection");
  });

  it("recovers from an unknown current value", () => {
    expect(cycleDim(dims, "bogus", 1)).toBe("mpg");
  });
});

describe("combination guards", () => {
  it("rigid is blocked for single-dimension targets", () => {
    expect(variantAllowed("rigid", "mpg")).toBe(false);
    expect(variantAllowed("rigid", "projection")).toBe(true);
    expect(variantAllowed("mean", "mpg")).toBe(true);
  });

  it("gradient mode needs a 2D target", () => {
    expect(modeAllowed("gradient", "mpg")).toBe(false);
    expect(modeAllowed("gradient", "projection")).toBe(true);
    expect(modeAllowed("contour", "mpg")).toBe(true);
  });
});

describe("layout form validation", () => {
  it("accepts sane values", () => {
    expect(validateLayoutForm({ iterations: 500, lambda: 0.99 })).toEqual({});
  });

  it("rejects lambda outside (0, 1)", () => {
    expect(validateLayoutForm({ iterations: 10, lambda: 1.0 })).toHaveProperty("lambda");
    expect(validateLayoutForm({ iterations: 10, lambda: 1.5 })).toHaveProperty("lambda");
    expect(validateLayoutForm({ iterations: 10, lambda: 0 })).toHaveProperty("lambda");
  });

  it("rejects negative iterations and NaN", () => {
    expect(validateLayoutForm({ iterations: -1, lambda: 0.9 })).toHaveProperty("iterations");
    expect(validateLayoutForm({ iterations: NaN, lambda: 0.9 })).toHaveProperty("iterations");
  });

  it("checks the optional numeric fields", () => {
    expect(
      validateLayoutForm({ iterations: 5, lambda: 0.9, initialTemp: -2 }),
    ).toHaveProperty("initialTemp");
    expect(
      validateLayoutForm({ iterations: 5, lambda: 0.9, edgeLength: 0 }),
    ).toHaveProperty("edgeLength");
  });
});
