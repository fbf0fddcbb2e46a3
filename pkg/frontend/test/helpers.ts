import fs from 'fs';
import path from 'path';
import { PNG } from 'pngjs';
import * as tf from '@tensorflow/tfjs';
import { fileIOHandler } from '../src/models';

/** Small deterministic PRNG (LCG) so fixtures are reproducible everywhere. */
export function lcg(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (Math.imul(state, 1664525) + 1013904223) >>> 0;
    return state / 2 ** 32;
  };
}

/**
 * A structured synthetic "house photo": sky/ground gradient split plus a
 * few solid rectangles, so segmentation masks contain several regions.
 */
export function makePngBuffer(seed: number, width = 48, height = 48): Buffer {
  const rand = lcg(seed);
  const png = new PNG({ width, height });
  const horizon = Math.floor(height * (0.35 + 0.2 * rand()));
  const skyTone = 120 + Math.floor(100 * rand());
  const groundTone = 40 + Math.floor(80 * rand());
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const i = (y * width + x) * 4;
      if (y < horizon) {
        png.data[i] = skyTone - 40;
        png.data[i + 1] = skyTone - 20;
        png.data[i + 2] = Math.min(255, skyTone + 60);
      } else {
        png.data[i] = groundTone + 30;
        png.data[i + 1] = groundTone + 50;
        png.data[i + 2] = groundTone;
      }
      png.data[i + 3] = 255;
    }
  }
  const nBoxes = 2 + Math.floor(3 * rand());
  for (let b = 0; b < nBoxes; b++) {
    const bw = 4 + Math.floor(rand() * (width / 3));
    const bh = 4 + Math.floor(rand() * (height / 3));
    const x0 = Math.floor(rand() * (width - bw));
    const y0 = Math.floor(rand() * (height - bh));
    const color = [Math.floor(rand() * 255), Math.floor(rand() * 255), Math.floor(rand() * 255)];
    for (let y = y0; y < y0 + bh; y++) {
      for (let x = x0; x < x0 + bw; x++) {
        const i = (y * width + x) * 4;
        png.data[i] = color[0];
        png.data[i + 1] = color[1];
        png.data[i + 2] = color[2];
      }
    }
  }
  return PNG.sync.write(png);
}

function seededWeights(model: tf.LayersModel, seed: number): void {
  const rand = lcg(seed);
  const replaced = model.getWeights().map(w => {
    const values = new Float32Array(w.size);
    for (let i = 0; i < values.length; i++) {
      values[i] = (rand() - 0.5) * 1.6;
    }
    return tf.tensor(values, w.shape);
  });
  model.setWeights(replaced);
  replaced.forEach(t => t.dispose());
}

/** Tiny classifier: conv + pool + dense logits over the category set. */
export function buildClassificationModel(
  nCategories: number,
  inputSize: [number, number],
  seed: number,
): tf.LayersModel {
  const model = tf.sequential({
    layers: [
      tf.layers.conv2d({
        inputShape: [...inputSize, 3],
        filters: 4,
        kernelSize: 3,
        activation: 'relu',
        padding: 'same',
      }),
      tf.layers.maxPooling2d({ poolSize: 4 }),
      tf.layers.flatten(),
      tf.layers.dense({ units: nCategories }),
    ],
  });
  seededWeights(model, seed);
  return model;
}

/** Tiny segmenter: 1x1 conv emitting per-pixel category logits. */
export function buildSegmentationModel(
  nCategories: number,
  inputSize: [number, number],
  seed: number,
): tf.LayersModel {
  const model = tf.sequential({
    layers: [
      tf.layers.conv2d({
        inputShape: [...inputSize, 3],
        filters: nCategories,
        kernelSize: 1,
      }),
    ],
  });
  seededWeights(model, seed);
  return model;
}

export async function saveModel(model: tf.LayersModel, dir: string): Promise<void> {
  fs.mkdirSync(dir, { recursive: true });
  await model.save(fileIOHandler(dir));
}

export function writeFixtureImages(dir: string, count: number): string[] {
  fs.mkdirSync(dir, { recursive: true });
  const ids: string[] = [];
  for (let i = 0; i < count; i++) {
    const id = `prop${String(i).padStart(3, '0')}`;
    fs.writeFileSync(path.join(dir, `${id}.png`), makePngBuffer(1000 + i));
    ids.push(id);
  }
  return ids;
}
