import * as tf from '@tensorflow/tfjs';
import { LoadedImage, toBatch } from './images';
import { EncoderSpec } from './manifest';

/**
 * Classification encoding: one row per image holding the post-softmax
 * confidence for every category. Rows sum to 1 up to float error.
 */
export async function extractClassification(
  model: tf.LayersModel,
  encoder: EncoderSpec,
  images: LoadedImage[],
  batchSize: number,
): Promise<number[][]> {
  const nCategories = encoder.categories.length;
  const rows: number[][] = [];
  for (let start = 0; start < images.length; start += batchSize) {
    const chunk = images.slice(start, start + batchSize);
    const confidences = tf.tidy(() => {
      const batch = toBatch(chunk, encoder.input_size);
      let out = model.predict(batch) as tf.Tensor;
      out = out.reshape([chunk.length, -1]);
      if (out.shape[1] !== nCategories) {
        throw new Error(
          `${encoder.name}: model emits ${out.shape[1]} values per image, ` +
            `manifest lists ${nCategories} categories`,
        );
      }
      return encoder.output === 'logits' ? tf.softmax(out, 1) : out;
    });
    const data = await confidences.data();
    confidences.dispose();
    for (let i = 0; i < chunk.length; i++) {
      rows.push(Array.from(data.slice(i * nCategories, (i + 1) * nCategories)));
    }
  }
  return rows;
}
