#!/usr/bin/env node
// Command-line front end: train / train-multilabel over line-record datasets.

import fs from "node:fs";

import yargs from "yargs";
import { hideBin } from "yargs/helpers";

import { makeSpec, TrainSpec } from "./spec.js";
import { finetune, finetuneMultilabel } from "./train.js";

interface SpecArgs {
  model: string;
  lr: number;
  batch: number;
  epochs: number;
  warmup: number;
  weightDecay: number;
  maxSeqLen: number;
  selection: string;
  seed: number;
}

function specFromArgs(args: SpecArgs): TrainSpec {
  return makeSpec({
    model: args.model as TrainSpec["model"],
    learningRate: args.lr,
    batchSize: args.batch,
    epochs: args.epochs,
    warmupRatio: args.warmup,
    weightDecay: args.weightDecay,
    maxSeqLength: args.maxSeqLen,
    selection: args.selection as TrainSpec["selection"],
    seed: args.seed,
  });
}

const specOptions = {
  model: { type: "string" as const, default: "tiny", choices: ["tiny", "small", "base"] },
  lr: { type: "number" as const, default: 5e-5, describe: "learning rate" },
  batch: { type: "number" as const, default: 32 },
  epochs: { type: "number" as const, default: 6 },
  warmup: { type: "number" as const, default: 0.06, describe: "warmup ratio" },
  "weight-decay": { type: "number" as const, default: 1e-4 },
  "max-seq-len": { type: "number" as const, default: 128 },
  selection: { type: "string" as const, default: "last", choices: ["last", "best"] },
  seed: { type: "number" as const, default: 0 },
};

function writeReport(path: string | undefined, payload: unknown): void {
  if (path) fs.writeFileSync(path, JSON.stringify(payload, null, 2) + "\n");
}

async function main(): Promise<void> {
  await yargs(hideBin(process.argv))
    .scriptName("attrgen-trainer")
    .command(
      "train",
      "fine-tune a single-label classifier and report accuracy / macro F1",
      (y) =>
        y.options({
          ...specOptions,
          train: { type: "string", demandOption: true },
          test: { type: "string", demandOption: true },
          augment: { type: "string", array: true, describe: "extra training sets, concatenated" },
          "scores-out": { type: "string", describe: "dump per-example score rows here" },
          report: { type: "string", describe: "write metrics JSON here" },
        }),
      (args) => {
        const result = finetune(args.train, args.test, specFromArgs(args as unknown as SpecArgs), {
          augmentPaths: args.augment as string[] | undefined,
          scoresOut: args.scoresOut as string | undefined,
        });
        console.log(`accuracy = ${result.accuracy.toFixed(6)}`);
        console.log(`macro_f1 = ${result.macro_f1.toFixed(6)}`);
        writeReport(args.report as string | undefined, {
          accuracy: result.accuracy,
          macro_f1: result.macro_f1,
          classes: result.classes,
        });
      }
    )
    .command(
      "train-multilabel",
      "fine-tune per-class sigmoid heads; ranking metrics come from attrgen",
      (y) =>
        y.options({
          ...specOptions,
          train: { type: "string", demandOption: true },
          test: { type: "string", demandOption: true },
          augment: { type: "string", array: true },
          "scores-out": { type: "string", demandOption: true },
          ks: { type: "string", default: "1,3,5" },
          threshold: { type: "number", default: 0.5 },
          "attrgen-bin": { type: "string", default: "attrgen" },
          report: { type: "string" },
        }),
      (args) => {
        const kList = (args.ks as string).split(",").map((k) => parseInt(k.trim(), 10));
        const result = finetuneMultilabel(
          args.train,
          args.test,
          specFromArgs(args as unknown as SpecArgs),
          kList,
          args.scoresOut as string,
          {
            augmentPaths: args.augment as string[] | undefined,
            threshold: args.threshold as number,
            attrgenBin: args.attrgenBin as string,
          }
        );
        for (const name of Object.keys(result.metrics).sort()) {
          console.log(`${name} = ${result.metrics[name].toFixed(6)}`);
        }
        writeReport(args.report as string | undefined, result.metrics);
      }
    )
    .demandCommand(1)
    .strict()
    .parseAsync();
}

main().catch((err) => {
  console.error(err instanceof Error ? err.message : String(err));
  process.exit(1);
});
