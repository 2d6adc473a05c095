import { describe, expect, it } from "vitest";

import {
  DEFAULT_THRESHOLD,
  MAX_LEVEL,
  highlightClass,
  highlightLevel,
} from "../src/highlight.js";

describe("highlightLevel", () => {
  it("returns 0 at or below the threshold", () => {
    expect(highlightLevel(0)).toBe(0);
    expect(highlightLevel(0.5)).toBe(0);
    expect(highlightLevel(-0.3)).toBe(0);
    expect(highlightLevel(DEFAULT_THRESHOLD)).toBe(0);
  });

  it("grows proportionally above the threshold", () => {
    expect(highlightLevel(0.55)).toBe(1);
    expect(highlightLevel(0.625)).toBe(2);
    expect(highlightLevel(0.75)).toBe(3);
    expect(highlightLevel(0.875)).toBe(4);
    expect(highlightLevel(0.99)).toBe(4);
  });

  it("maps a perfect score to the strongest bucket", () => {
    expect(highlightLevel(1.0)).toBe(MAX_LEVEL);
  });

  it("never exceeds MAX_LEVEL even for out-of-range scores", () => {
    expect(highlightLevel(5)).toBe(MAX_LEVEL);
  });

  it("is monotone in the score", () => {
    let prev = 0;
    for (let s = 0; s <= 1.0001; s += 0.01) {
      const level = highlightLevel(s);
      expect(level).toBeGreaterThanOrEqual(prev);
      prev = level;
    }
  });

  it("treats non-finite scores as no highlight", () => {
    expect(highlightLevel(Number.NaN)).toBe(0);
    expect(highlightLevel(Number.POSITIVE_INFINITY)).toBe(0);
  });

  it("respects a custom threshold", () => {
    expect(highlightLevel(0.4, 0.2)).toBe(2);
    expect(highlightLevel(0.2, 0.2)).toBe(0);
  });

  it("degenerate threshold of 1 highlights only scores above it", () => {
    expect(highlightLevel(1.0, 1.0)).toBe(0);
    expect(highlightLevel(1.1, 1.0)).toBe(MAX_LEVEL);
  });
});

describe("highlightClass", () => {
  it("maps level 0 to no class", () => {
    expect(highlightClass(0)).toBe("");
    expect(highlightClass(-1)).toBe("");
  });

  it("maps positive levels to hl-N", () => {
    expect(highlightClass(1)).toBe("hl-1");
    expect(highlightClass(4)).toBe("hl-4");
  });

  it("clamps to the strongest class", () => {
    expect(highlightClass(17)).toBe(`hl-${MAX_LEVEL}`);
  });
});
