/**
 * Fine-tuning and evaluation over line-record datasets.
 *
 * The classifier is a trainable head (linear, or one hidden layer for the
 * larger size tags) over fixed hashed bag-of-ngrams features. Single-label
 * training uses softmax cross-entropy; multi-label uses independent
 * per-class sigmoids. Ranking metrics for multi-label runs are never
 * computed here: the per-example score vectors are dumped to a file and
 * scored by the `attrgen eval-metrics` command, so the metric math lives in
 * exactly one place.
 */

import fs from "node:fs";
import os from "node:os";
import path from "node:path";
import { execFileSync } from "node:child_process";

import * as tf from "@tensorflow/tfjs";

import { featurizeAll } from "./features.js";
import {
  DatasetRecord,
  checkHeadRange,
  headSize,
  labelSet,
  loadRecords,
  mergeRecords,
} from "./records.js";
import { MODEL_SIZES, TrainSpec } from "./spec.js";

export interface FinetuneOptions {
  /** Extra datasets concatenated after the training set, no deduplication. */
  augmentPaths?: string[];
  /** Where to dump per-example score rows for the test set. */
  scoresOut?: string;
}

export interface FinetuneResult {
  accuracy: number;
  macro_f1: number;
  classes: number;
  scoresPath?: string;
}

export interface MultilabelOptions {
  augmentPaths?: string[];
  /** Sigmoid decision threshold for the F1 numbers. */
  threshold?: number;
  /** Command used to score the dump; override to point at a venv. */
  attrgenBin?: string;
}

export interface MultilabelResult {
  scoresPath: string;
  metrics: Record<string, number>;
}

function mulberry32(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function shuffled(n: number, rng: () => number): number[] {
  const order = Array.from({ length: n }, (_, i) => i);
  for (let i = n - 1; i > 0; i--) {
    const j = Math.floor(rng() * (i + 1));
    [order[i], order[j]] = [order[j], order[i]];
  }
  return order;
}

function buildModel(
  dimension: number,
  hidden: number,
  classes: number,
  seed: number
): tf.Sequential {
  const model = tf.sequential();
  if (hidden > 0) {
    model.add(
      tf.layers.dense({
        inputShape: [dimension],
        units: hidden,
        activation: "relu",
        kernelInitializer: tf.initializers.glorotUniform({ seed }),
        biasInitializer: "zeros",
      })
    );
    model.add(
      tf.layers.dense({
        units: classes,
        kernelInitializer: tf.initializers.glorotUniform({ seed: seed + 1 }),
        biasInitializer: "zeros",
      })
    );
  } else {
    model.add(
      tf.layers.dense({
        inputShape: [dimension],
        units: classes,
        kernelInitializer: tf.initializers.glorotUniform({ seed }),
        biasInitializer: "zeros",
      })
    );
  }
  return model;
}

function targets(records: DatasetRecord[], classes: number): tf.Tensor2D {
  const data = new Float32Array(records.length * classes);
  records.forEach((record, row) => {
    for (const id of labelSet(record)) data[row * classes + id] = 1;
  });
  return tf.tensor2d(data, [records.length, classes]);
}

function features(records: DatasetRecord[], dimension: number, maxTokens: number): tf.Tensor2D {
  const data = featurizeAll(
    records.map((r) => r.text),
    dimension,
    maxTokens
  );
  return tf.tensor2d(data, [records.length, dimension]);
}

type LossKind = "softmax" | "sigmoid";

function batchLoss(kind: LossKind, truth: tf.Tensor2D, logits: tf.Tensor2D): tf.Scalar {
  return kind === "softmax"
    ? (tf.losses.softmaxCrossEntropy(truth, logits) as tf.Scalar)
    : (tf.losses.sigmoidCrossEntropy(truth, logits) as tf.Scalar);
}

function scoreRows(model: tf.Sequential, xs: tf.Tensor2D, kind: LossKind): number[][] {
  return tf.tidy(() => {
    const logits = model.apply(xs) as tf.Tensor2D;
    const probs = kind === "softmax" ? tf.softmax(logits) : tf.sigmoid(logits);
    return probs.arraySync() as number[][];
  });
}

function validationAccuracy(rows: number[][], records: DatasetRecord[], kind: LossKind): number {
  if (kind === "softmax") {
    let hits = 0;
    rows.forEach((row, i) => {
      if (argmax(row) === records[i].label) hits++;
    });
    return hits / rows.length;
  }
  let agree = 0;
  let total = 0;
  rows.forEach((row, i) => {
    const truth = new Set(labelSet(records[i]));
    row.forEach((score, c) => {
      if (score >= 0.5 === truth.has(c)) agree++;
      total++;
    });
  });
  return agree / total;
}

function fit(
  model: tf.Sequential,
  xs: tf.Tensor2D,
  ys: tf.Tensor2D,
  spec: TrainSpec,
  kind: LossKind,
  validation?: { xs: tf.Tensor2D; records: DatasetRecord[] }
): void {
  const optimizer = tf.train.adam(spec.learningRate);
  const n = xs.shape[0];
  const stepsPerEpoch = Math.ceil(n / spec.batchSize);
  const warmupSteps = Math.ceil(spec.warmupRatio * stepsPerEpoch * spec.epochs);
  const rng = mulberry32(spec.seed ^ 0x9e3779b9);
  let step = 0;
  let best: { score: number; weights: tf.Tensor[] } | null = null;

  for (let epoch = 0; epoch < spec.epochs; epoch++) {
    const order = shuffled(n, rng);
    for (let start = 0; start < n; start += spec.batchSize) {
      const indices = order.slice(start, start + spec.batchSize);
      const lrNow =
        step < warmupSteps
          ? (spec.learningRate * (step + 1)) / warmupSteps
          : spec.learningRate;
      (optimizer as unknown as { learningRate: number }).learningRate = lrNow;
      tf.tidy(() => {
        const bx = tf.gather(xs, indices);
        const by = tf.gather(ys, indices);
        optimizer.minimize(() => batchLoss(kind, by as tf.Tensor2D, model.apply(bx) as tf.Tensor2D));
      });
      if (spec.weightDecay > 0) {
        // decoupled weight decay on kernels, not biases
        for (const weight of model.trainableWeights) {
          if (!weight.name.includes("kernel")) continue;
          const decayed = weight.read().mul(1 - lrNow * spec.weightDecay);
          weight.write(decayed);
          decayed.dispose();
        }
      }
      step++;
    }
    if (validation) {
      const rows = scoreRows(model, validation.xs, kind);
      const score = validationAccuracy(rows, validation.records, kind);
      if (best === null || score > best.score) {
        best?.weights.forEach((w) => w.dispose());
        best = { score, weights: model.getWeights().map((w) => w.clone()) };
      }
    }
  }
  if (best !== null) {
    const chosen: { weights: tf.Tensor[] } = best;
    model.setWeights(chosen.weights);
    chosen.weights.forEach((w) => w.dispose());
  }
  optimizer.dispose();
}

function argmax(row: number[]): number {
  let winner = 0;
  for (let i = 1; i < row.length; i++) {
    if (row[i] > row[winner]) winner = i;
  }
  return winner;
}

export function singleLabelMetrics(
  rows: number[][],
  records: DatasetRecord[]
): { accuracy: number; macro_f1: number } {
  const classes = rows[0].length;
  const predicted = rows.map(argmax);
  let hits = 0;
  const tp = new Array(classes).fill(0);
  const fp = new Array(classes).fill(0);
  const fn = new Array(classes).fill(0);
  predicted.forEach((guess, i) => {
    const truth = records[i].label as number;
    if (guess === truth) {
      hits++;
      tp[guess]++;
    } else {
      fp[guess]++;
      fn[truth]++;
    }
  });
  let f1Sum = 0;
  for (let c = 0; c < classes; c++) {
    const denominator = 2 * tp[c] + fp[c] + fn[c];
    f1Sum += denominator === 0 ? 0 : (2 * tp[c]) / denominator;
  }
  return { accuracy: hits / records.length, macro_f1: f1Sum / classes };
}

export function writeScores(rows: number[][], out: string): void {
  const lines = rows.map((row) => row.map((v) => String(v)).join(" "));
  fs.writeFileSync(out, lines.join("\n") + "\n");
}

export function readScores(path: string): number[][] {
  return fs
    .readFileSync(path, "utf-8")
    .split("\n")
    .filter((line) => line.trim() !== "")
    .map((line) => line.trim().split(/\s+/).map(Number));
}

function splitForSelection(
  records: DatasetRecord[],
  spec: TrainSpec
): { train: DatasetRecord[]; validation: DatasetRecord[] } {
  if (spec.selection === "last" || records.length < 2) {
    return { train: records, validation: [] };
  }
  const rng = mulberry32(spec.seed ^ 0x51ed270);
  const order = shuffled(records.length, rng);
  const held = Math.max(1, Math.floor(records.length / 10));
  const validationIdx = new Set(order.slice(0, held));
  return {
    train: records.filter((_, i) => !validationIdx.has(i)),
    validation: records.filter((_, i) => validationIdx.has(i)),
  };
}

function assertSingleLabel(records: DatasetRecord[], context: string): void {
  records.forEach((record, i) => {
    if (Array.isArray(record.label)) {
      throw new Error(
        `${context}: record ${i} has a label list; use the multilabel entry point`
      );
    }
  });
}

function runTraining(
  trainRecords: DatasetRecord[],
  testRecords: DatasetRecord[],
  spec: TrainSpec,
  kind: LossKind
): { rows: number[][]; classes: number } {
  const classes = headSize(trainRecords);
  checkHeadRange(testRecords, classes, "test set");
  const { dimension, hidden } = MODEL_SIZES[spec.model];
  const { train, validation } = splitForSelection(trainRecords, spec);

  const xs = features(train, dimension, spec.maxSeqLength);
  const ys = targets(train, classes);
  const model = buildModel(dimension, hidden, classes, spec.seed);
  const validationTensors =
    validation.length > 0
      ? { xs: features(validation, dimension, spec.maxSeqLength), records: validation }
      : undefined;
  fit(model, xs, ys, spec, kind, validationTensors);

  const testXs = features(testRecords, dimension, spec.maxSeqLength);
  const rows = scoreRows(model, testXs, kind);

  xs.dispose();
  ys.dispose();
  testXs.dispose();
  validationTensors?.xs.dispose();
  model.dispose();
  return { rows, classes };
}

/** Train a single-label classifier and report accuracy and macro F1. */
export function finetune(
  trainPath: string,
  testPath: string,
  spec: TrainSpec,
  options: FinetuneOptions = {}
): FinetuneResult {
  const trainRecords = mergeRecords([trainPath, ...(options.augmentPaths ?? [])]);
  const testRecords = loadRecords(testPath);
  assertSingleLabel(trainRecords, "training set");
  assertSingleLabel(testRecords, "test set");

  const { rows, classes } = runTraining(trainRecords, testRecords, spec, "softmax");
  if (options.scoresOut) writeScores(rows, options.scoresOut);
  const metrics = singleLabelMetrics(rows, testRecords);
  return { ...metrics, classes, scoresPath: options.scoresOut };
}

function scoreDumpWithPrimary(
  scoresPath: string,
  truthPath: string,
  kList: number[],
  threshold: number,
  attrgenBin: string
): Record<string, number> {
  const report = path.join(
    fs.mkdtempSync(path.join(os.tmpdir(), "trainer-eval-")),
    "metrics.json"
  );
  try {
    execFileSync(
      attrgenBin,
      [
        "eval-metrics",
        "--scores", scoresPath,
        "--truth", truthPath,
        "--report", report,
        "--ks", kList.join(","),
        "--threshold", String(threshold),
      ],
      { stdio: ["ignore", "ignore", "pipe"] }
    );
  } catch (err) {
    const stderr = (err as { stderr?: Buffer }).stderr?.toString() ?? "";
    throw new Error(`scoring via ${attrgenBin} failed: ${stderr.trim() || (err as Error).message}`);
  }
  return JSON.parse(fs.readFileSync(report, "utf-8"));
}

/**
 * Train a multi-label classifier, dump per-example class scores, and have
 * the primary package compute the ranking metrics from that dump.
 */
export function finetuneMultilabel(
  trainPath: string,
  testPath: string,
  spec: TrainSpec,
  kList: number[],
  scoresOut: string,
  options: MultilabelOptions = {}
): MultilabelResult {
  const trainRecords = mergeRecords([trainPath, ...(options.augmentPaths ?? [])]);
  const testRecords = loadRecords(testPath);

  const { rows } = runTraining(trainRecords, testRecords, spec, "sigmoid");
  writeScores(rows, scoresOut);
  const metrics = scoreDumpWithPrimary(
    scoresOut,
    testPath,
    kList,
    options.threshold ?? 0.5,
    options.attrgenBin ?? "attrgen"
  );
  return { scoresPath: scoresOut, metrics };
}
