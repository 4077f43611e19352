import { describe, expect, it } from "vitest";

import { featurize, tokenize } from "../src/features.js";

describe("tokenize", () => {
  it("lowercases and keeps alphanumeric runs", () => {
    expect(tokenize("The U.S. GDP rose 3% in Q2!")).toEqual([
      "the", "u", "s", "gdp", "rose", "3", "in", "q2",
    ]);
  });

  it("returns no tokens for punctuation-only text", () => {
    expect(tokenize("--- !!! ---")).toEqual([]);
  });
});

describe("featurize", () => {
  it("produces unit-norm vectors", () => {
    const vector = featurize("a small note about tides", 256, 128);
    let norm = 0;
    for (const v of vector) norm += v * v;
    expect(norm).toBeCloseTo(1.0, 6); // float32 storage
  });

  it("maps empty text to the zero vector", () => {
    const vector = featurize("", 256, 128);
    expect(vector.every((v) => v === 0)).toBe(true);
  });

  it("is deterministic", () => {
    const a = featurize("same text twice", 512, 128);
    const b = featurize("same text twice", 512, 128);
    expect(Array.from(a)).toEqual(Array.from(b));
  });

  it("ignores tokens beyond the sequence limit", () => {
    const capped = featurize("alpha beta gamma delta", 512, 2);
    const cappedOther = featurize("alpha beta OTHER WORDS", 512, 2);
    const uncapped = featurize("alpha beta gamma delta", 512, 128);
    expect(Array.from(capped)).toEqual(Array.from(cappedOther));
    expect(Array.from(capped)).not.toEqual(Array.from(uncapped));
  });

  it("separates disjoint vocabularies", () => {
    const a = featurize("monsoon bamboo paddy", 512, 128);
    const b = featurize("fjord cobblestone alpine", 512, 128);
    let dot = 0;
    for (let i = 0; i < 512; i++) dot += a[i] * b[i];
    expect(dot).toBeLessThan(0.2);
  });
});
