export { featurize, featurizeAll, tokenize } from "./features.js";
export {
  checkHeadRange,
  headSize,
  labelSet,
  loadRecords,
  mergeRecords,
  parseRecord,
  type DatasetRecord,
} from "./records.js";
export { MODEL_SIZES, makeSpec, type ModelTag, type TrainSpec } from "./spec.js";
export {
  finetune,
  finetuneMultilabel,
  readScores,
  singleLabelMetrics,
  writeScores,
  type FinetuneOptions,
  type FinetuneResult,
  type MultilabelOptions,
  type MultilabelResult,
} from "./train.js";
