import { z } from "zod";

/**
 * Hyperparameters for one fine-tuning run.
 *
 * Defaults follow the usual small-encoder fine-tuning recipe: lr 5e-5,
 * batch 32, 6 epochs, weight decay 1e-4, 6% linear warmup, 128-token
 * sequences. Runs on generated data select the last-epoch model
 * (`selection: "last"`): generated corpora have no trustworthy validation
 * split, so validation-based selection is opt-in (`"best"`).
 */
export interface TrainSpec {
  model: ModelTag;
  learningRate: number;
  batchSize: number;
  epochs: number;
  warmupRatio: number;
  weightDecay: number;
  maxSeqLength: number;
  selection: "last" | "best";
  seed: number;
}

export type ModelTag = "tiny" | "small" | "base";

/** Feature dimension and hidden width per size tag; hidden 0 = linear head. */
export const MODEL_SIZES: Record<ModelTag, { dimension: number; hidden: number }> = {
  tiny: { dimension: 1024, hidden: 0 },
  small: { dimension: 2048, hidden: 64 },
  base: { dimension: 4096, hidden: 128 },
};

const specSchema = z
  .object({
    model: z.enum(["tiny", "small", "base"]).default("tiny"),
    learningRate: z.number().positive().default(5e-5),
    batchSize: z.number().int().positive().default(32),
    epochs: z.number().int().positive().default(6),
    warmupRatio: z.number().min(0).max(1).default(0.06),
    weightDecay: z.number().min(0).default(1e-4),
    maxSeqLength: z.number().int().positive().default(128),
    selection: z.enum(["last", "best"]).default("last"),
    seed: z.number().int().nonnegative().default(0),
  })
  .strict();

export function makeSpec(overrides: Partial<TrainSpec> = {}): TrainSpec {
  return specSchema.parse(overrides);
}
