/**
 * Line-record dataset I/O.
 *
 * Each line is a JSON object with exactly `label` and `text`; single-label
 * records carry an integer, multi-label records an ascending integer list.
 * This mirrors the format the generator emits, so its outputs train directly.
 */

import fs from "node:fs";
import { z } from "zod";

const labelSchema = z.union([
  z.number().int().nonnegative(),
  z.array(z.number().int().nonnegative()).nonempty(),
]);

const recordSchema = z
  .object({ label: labelSchema, text: z.string().min(1) })
  .strict();

export interface DatasetRecord {
  label: number | number[];
  text: string;
}

export function parseRecord(line: string, context: string): DatasetRecord {
  let raw: unknown;
  try {
    raw = JSON.parse(line);
  } catch (err) {
    throw new Error(`${context}: not valid JSON (${(err as Error).message})`);
  }
  const parsed = recordSchema.safeParse(raw);
  if (!parsed.success) {
    throw new Error(`${context}: ${parsed.error.issues[0].message}`);
  }
  const label = parsed.data.label;
  if (Array.isArray(label)) {
    for (let i = 1; i < label.length; i++) {
      if (label[i] <= label[i - 1]) {
        throw new Error(`${context}: label list must be strictly ascending`);
      }
    }
  }
  return parsed.data;
}

export function loadRecords(path: string): DatasetRecord[] {
  const content = fs.readFileSync(path, "utf-8");
  const records: DatasetRecord[] = [];
  content.split("\n").forEach((line, index) => {
    if (line.trim() === "") return;
    records.push(parseRecord(line, `${path}:${index + 1}`));
  });
  if (records.length === 0) {
    throw new Error(`${path}: dataset is empty`);
  }
  return records;
}

/** Concatenate datasets in order, no deduplication. */
export function mergeRecords(paths: string[]): DatasetRecord[] {
  return paths.flatMap((path) => loadRecords(path));
}

export function labelSet(record: DatasetRecord): number[] {
  return Array.isArray(record.label) ? record.label : [record.label];
}

/** Highest label id across records, plus one; the classifier head size. */
export function headSize(records: DatasetRecord[]): number {
  let max = -1;
  for (const record of records) {
    for (const id of labelSet(record)) {
      if (id > max) max = id;
    }
  }
  return max + 1;
}

export function checkHeadRange(records: DatasetRecord[], classes: number, context: string): void {
  records.forEach((record, index) => {
    for (const id of labelSet(record)) {
      if (id >= classes) {
        throw new Error(
          `${context}: record ${index} label id ${id} outside model head range [0, ${classes})`
        );
      }
    }
  });
}
