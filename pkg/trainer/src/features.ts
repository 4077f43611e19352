// Hashed bag-of-ngrams featurizer: the fixed "encoder" under the trainable head.

const TOKEN = /[a-z0-9]+/g;

export function tokenize(text: string): string[] {
  return text.toLowerCase().match(TOKEN) ?? [];
}

function fnv1a32(text: string): number {
  let hash = 0x811c9dc5;
  for (let i = 0; i < text.length; i++) {
    hash ^= text.charCodeAt(i);
    // 32-bit FNV prime multiply via shifts to stay in integer range
    hash = (hash + ((hash << 1) + (hash << 4) + (hash << 7) + (hash << 8) + (hash << 24))) >>> 0;
  }
  return hash;
}

/**
 * L2-normalized term-frequency vector over unigrams and bigrams of the
 * first `maxTokens` tokens, hashed into `dimension` buckets.
 */
export function featurize(text: string, dimension: number, maxTokens: number): Float32Array {
  const out = new Float32Array(dimension);
  const tokens = tokenize(text).slice(0, maxTokens);
  if (tokens.length === 0) return out;
  for (let i = 0; i < tokens.length; i++) {
    out[fnv1a32(tokens[i]) % dimension] += 1;
    if (i + 1 < tokens.length) {
      out[fnv1a32(`${tokens[i]} ${tokens[i + 1]}`) % dimension] += 1;
    }
  }
  let norm = 0;
  for (let i = 0; i < dimension; i++) norm += out[i] * out[i];
  norm = Math.sqrt(norm);
  for (let i = 0; i < dimension; i++) out[i] /= norm;
  return out;
}

export function featurizeAll(
  texts: string[],
  dimension: number,
  maxTokens: number
): Float32Array {
  const out = new Float32Array(texts.length * dimension);
  texts.forEach((text, row) => {
    out.set(featurize(text, dimension, maxTokens), row * dimension);
  });
  return out;
}
