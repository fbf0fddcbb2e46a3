import fs from 'fs';
import path from 'path';
import * as jpeg from 'jpeg-js';
import { PNG } from 'pngjs';
import * as tf from '@tensorflow/tfjs';

export interface LoadedImage {
  /** Property id, taken from the file name without extension. */
  id: string;
  file: string;
  /** [height, width, 3] float32 in [0, 1]. */
  tensor: tf.Tensor3D;
}

export interface SkippedImage {
  file: string;
  reason: string;
}

const IMAGE_EXTENSIONS = new Set(['.png', '.jpg', '.jpeg']);

/** Files that look like property photos: `{property_id}.{ext}`. */
export function listImageFiles(imageDir: string): string[] {
  return fs
    .readdirSync(imageDir)
    .filter(f => IMAGE_EXTENSIONS.has(path.extname(f).toLowerCase()))
    .sort();
}

function rgbaToTensor(data: Uint8Array | Buffer, width: number, height: number): tf.Tensor3D {
  const rgb = new Float32Array(width * height * 3);
  for (let i = 0, j = 0; j < rgb.length; i += 4, j += 3) {
    rgb[j] = data[i] / 255;
    rgb[j + 1] = data[i + 1] / 255;
    rgb[j + 2] = data[i + 2] / 255;
  }
  return tf.tensor3d(rgb, [height, width, 3]);
}

/** Decode one PNG or JPEG to a [0,1] RGB tensor; throws on undecodable input. */
export function decodeImage(filePath: string): tf.Tensor3D {
  const bytes = fs.readFileSync(filePath);
  if (path.extname(filePath).toLowerCase() === '.png') {
    const png = PNG.sync.read(bytes);
    return rgbaToTensor(png.data, png.width, png.height);
  }
  const img = jpeg.decode(bytes, { useTArray: true, maxMemoryUsageInMB: 512 });
  return rgbaToTensor(img.data, img.width, img.height);
}

/**
 * Decode every image in the directory, skipping (and logging) any that do
 * not decode. Row order downstream follows the sorted file order here.
 */
export function loadImages(imageDir: string): { images: LoadedImage[]; skipped: SkippedImage[] } {
  const images: LoadedImage[] = [];
  const skipped: SkippedImage[] = [];
  for (const file of listImageFiles(imageDir)) {
    const full = path.join(imageDir, file);
    try {
      images.push({
        id: path.basename(file, path.extname(file)),
        file,
        tensor: decodeImage(full),
      });
    } catch (err) {
      skipped.push({ file, reason: err instanceof Error ? err.message : String(err) });
    }
  }
  return { images, skipped };
}

/** Stack images into a resized [n, h, w, 3] batch for one model. */
export function toBatch(images: LoadedImage[], size: [number, number]): tf.Tensor4D {
  return tf.tidy(() => {
    const resized = images.map(img => tf.image.resizeBilinear(img.tensor, size));
    return tf.stack(resized) as tf.Tensor4D;
  });
}
