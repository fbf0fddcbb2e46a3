import * as tf from '@tensorflow/tfjs';
import { LoadedImage, toBatch } from './images';
import { EncoderSpec } from './manifest';

/**
 * Count connected regions (4-connectivity) per category in a label mask.
 * Instance boundaries are not recoverable from a semantic mask, so distinct
 * regions stand in for instances; contiguous background classes therefore
 * count as one.
 */
export function regionCounts(mask: Int32Array, height: number, width: number, nCategories: number): number[] {
  const counts = new Array<number>(nCategories).fill(0);
  const seen = new Uint8Array(mask.length);
  const stack: number[] = [];
  for (let start = 0; start < mask.length; start++) {
    if (seen[start]) continue;
    const category = mask[start];
    counts[category] += 1;
    seen[start] = 1;
    stack.push(start);
    while (stack.length > 0) {
      const at = stack.pop() as number;
      const row = Math.floor(at / width);
      const col = at % width;
      for (const [dr, dc] of [[-1, 0], [1, 0], [0, -1], [0, 1]] as const) {
        const r = row + dr;
        const c = col + dc;
        if (r < 0 || r >= height || c < 0 || c >= width) continue;
        const next = r * width + c;
        if (!seen[next] && mask[next] === category) {
          seen[next] = 1;
          stack.push(next);
        }
      }
    }
  }
  return counts;
}

/**
 * Panoptic-style encoding: per image and category, the number of connected
 * regions and the fraction of pixels covered. Proportions over all
 * categories sum to 1 (every pixel gets a label).
 */
export async function extractSegmentation(
  model: tf.LayersModel,
  encoder: EncoderSpec,
  images: LoadedImage[],
  batchSize: number,
): Promise<number[][]> {
  const nCategories = encoder.categories.length;
  const [height, width] = encoder.input_size;
  const pixels = height * width;
  const rows: number[][] = [];
  for (let start = 0; start < images.length; start += batchSize) {
    const chunk = images.slice(start, start + batchSize);
    const labels = tf.tidy(() => {
      const batch = toBatch(chunk, encoder.input_size);
      const out = model.predict(batch) as tf.Tensor;
      if (out.rank !== 4 || out.shape[3] !== nCategories) {
        throw new Error(
          `${encoder.name}: expected per-pixel logits [n, h, w, ${nCategories}], ` +
            `got shape [${out.shape.join(', ')}]`,
        );
      }
      return tf.argMax(out, 3) as tf.Tensor3D;
    });
    const data = (await labels.data()) as Int32Array;
    labels.dispose();
    for (let i = 0; i < chunk.length; i++) {
      const mask = data.slice(i * pixels, (i + 1) * pixels) as Int32Array;
      const counts = regionCounts(mask, height, width, nCategories);
      const pixelCounts = new Array<number>(nCategories).fill(0);
      for (let p = 0; p < mask.length; p++) pixelCounts[mask[p]] += 1;
      const row: number[] = [];
      for (let c = 0; c < nCategories; c++) {
        row.push(counts[c], pixelCounts[c] / pixels);
      }
      rows.push(row);
    }
  }
  return rows;
}
