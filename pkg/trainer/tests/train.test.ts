import fs from "node:fs";
import os from "node:os";
import path from "node:path";

import { describe, expect, it } from "vitest";

import { makeSpec } from "../src/spec.js";
import { finetune, readScores, singleLabelMetrics } from "../src/train.js";
import { loadRecords } from "../src/records.js";

// Small seeded generator so fixtures are stable across runs.
function rng(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state * 1664525 + 1013904223) >>> 0;
    return state / 4294967296;
  };
}

const POOLS = [
  ["monsoon", "bamboo", "paddy", "ginger", "typhoon", "lotus", "terrace", "jasmine"],
  ["fjord", "cobblestone", "alpine", "chapel", "vineyard", "tram", "plaza", "baroque"],
  ["savanna", "baobab", "dune", "oasis", "acacia", "safari", "delta", "kraal"],
];

function sentence(random: () => number, pool: string[]): string {
  const length = 4 + Math.floor(random() * 4);
  const words = [];
  for (let i = 0; i < length; i++) {
    words.push(pool[Math.floor(random() * pool.length)]);
  }
  return words.join(" ");
}

function writeDataset(records: { label: number | number[]; text: string }[]): string {
  const dir = fs.mkdtempSync(path.join(os.tmpdir(), "train-"));
  const file = path.join(dir, "d.jsonl");
  fs.writeFileSync(file, records.map((r) => JSON.stringify(r)).join("\n") + "\n");
  return file;
}

function separableFixture(seed: number, perClass: number): string {
  const random = rng(seed);
  const records = [];
  for (let label = 0; label < POOLS.length; label++) {
    for (let i = 0; i < perClass; i++) {
      records.push({ label, text: sentence(random, POOLS[label]) });
    }
  }
  return writeDataset(records);
}

// Desk-scale spec: a from-scratch linear head needs a far larger step size
// than encoder fine-tuning; contract defaults stay at the fine-tuning row.
const TOY = makeSpec({ learningRate: 1.0, epochs: 12, batchSize: 16, seed: 5 });

describe("finetune", () => {
  it("reaches at least 95% held-out accuracy on a separable 3-class task", () => {
    const started = Date.now();
    const train = separableFixture(1, 30);
    const test = separableFixture(2, 15);
    const result = finetune(train, test, TOY);
    const elapsed = (Date.now() - started) / 1000;
    expect(result.accuracy).toBeGreaterThanOrEqual(0.95);
    expect(elapsed).toBeLessThan(300);
    console.log(
      `[acceptance] PASS separable 3-class accuracy ${result.accuracy.toFixed(3)} (${elapsed.toFixed(1)}s)`
    );
  }, 300_000);

  it("memorizes a single example used as both train and test", () => {
    const only = writeDataset([{ label: 1, text: "monsoon bamboo paddy" }]);
    const result = finetune(only, only, TOY);
    expect(result.accuracy).toBe(1.0);
  });

  it("rejects test labels outside the trained head", () => {
    const train = writeDataset([
      { label: 0, text: "monsoon bamboo" },
      { label: 1, text: "fjord chapel" },
    ]);
    const test = writeDataset([{ label: 7, text: "savanna dune" }]);
    expect(() => finetune(train, test, TOY)).toThrowError(/head range \[0, 2\)/);
  });

  it("rejects multi-label records", () => {
    const train = writeDataset([{ label: [0, 1], text: "monsoon fjord" }]);
    expect(() => finetune(train, train, TOY)).toThrowError(/multilabel entry point/);
  });

  it("reports the same metrics as a recomputation from the dumped scores", () => {
    const train = separableFixture(3, 20);
    const test = separableFixture(4, 10);
    const scoresOut = path.join(path.dirname(train), "scores.txt");
    const result = finetune(train, test, TOY, { scoresOut });
    const recomputed = singleLabelMetrics(readScores(scoresOut), loadRecords(test));
    expect(recomputed.accuracy).toBe(result.accuracy);
    expect(recomputed.macro_f1).toBe(result.macro_f1);
  });

  it("is deterministic for a fixed seed", () => {
    const train = separableFixture(5, 12);
    const test = separableFixture(6, 6);
    const outA = path.join(path.dirname(train), "a.txt");
    const outB = path.join(path.dirname(train), "b.txt");
    finetune(train, test, TOY, { scoresOut: outA });
    finetune(train, test, TOY, { scoresOut: outB });
    expect(fs.readFileSync(outA, "utf-8")).toBe(fs.readFileSync(outB, "utf-8"));
  });

  it("widens the head when augmentation introduces new labels", () => {
    const gold = writeDataset([
      { label: 0, text: "monsoon bamboo paddy ginger" },
      { label: 1, text: "fjord cobblestone alpine chapel" },
    ]);
    const generated = writeDataset([{ label: 2, text: "savanna baobab dune oasis" }]);
    const result = finetune(gold, gold, TOY, { augmentPaths: [generated] });
    expect(result.classes).toBe(3);
  });

  it("supports validation-based selection", () => {
    const train = separableFixture(7, 20);
    const test = separableFixture(8, 8);
    const result = finetune(train, test, makeSpec({
      learningRate: 1.0, epochs: 8, batchSize: 16, seed: 9, selection: "best",
    }));
    expect(result.accuracy).toBeGreaterThanOrEqual(0.95);
  });
});
