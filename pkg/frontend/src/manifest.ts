import fs from 'fs';
import path from 'path';
import { z } from 'zod';

const encoderSchema = z.object({
  /** Encoder name; becomes `{name}.csv` and the column prefix downstream. */
  name: z.string().min(1).refine(n => !n.includes(':'), ':' + ' not allowed in encoder names'),
  kind: z.enum(['classification', 'segmentation']),
  /** Directory holding model.json plus weight shards (tfjs format). */
  model_path: z.string().min(1),
  /** [height, width] the model expects; images are resized to this. */
  input_size: z.tuple([z.number().int().positive(), z.number().int().positive()]),
  /** Category labels, in model output order; the emitted column count. */
  categories: z.array(z.string().min(1)).min(2),
  /** Whether the classification head emits raw logits or probabilities. */
  output: z.enum(['logits', 'probabilities']).default('logits'),
});

const manifestSchema = z.object({
  image_dir: z.string().min(1),
  output_dir: z.string().min(1),
  batch_size: z.number().int().positive().default(8),
  device: z.literal('cpu').default('cpu'),
  encoders: z.array(encoderSchema).min(1),
});

export type EncoderSpec = z.infer<typeof encoderSchema>;
export type ExtractionManifest = z.infer<typeof manifestSchema>;

/** Parse and validate a manifest file; relative paths resolve against it. */
export function loadManifest(manifestPath: string): ExtractionManifest {
  const raw = JSON.parse(fs.readFileSync(manifestPath, 'utf-8'));
  const manifest = manifestSchema.parse(raw);
  const names = manifest.encoders.map(e => e.name);
  if (new Set(names).size !== names.length) {
    throw new Error(`duplicate encoder names in ${manifestPath}`);
  }
  for (const encoder of manifest.encoders) {
    if (new Set(encoder.categories).size !== encoder.categories.length) {
      throw new Error(`duplicate categories for encoder ${encoder.name}`);
    }
  }
  const base = path.dirname(path.resolve(manifestPath));
  const resolve = (p: string) => (path.isAbsolute(p) ? p : path.join(base, p));
  return {
    ...manifest,
    image_dir: resolve(manifest.image_dir),
    output_dir: resolve(manifest.output_dir),
    encoders: manifest.encoders.map(e => ({ ...e, model_path: resolve(e.model_path) })),
  };
}

/** Column names one encoder emits, in order. */
export function encoderColumns(encoder: EncoderSpec): string[] {
  if (encoder.kind === 'classification') {
    return [...encoder.categories];
  }
  return encoder.categories.flatMap(c => [`${c}_count`, `${c}_prop`]);
}

/** Column kinds parallel to encoderColumns, in feature-store vocabulary. */
export function encoderKinds(encoder: EncoderSpec): string[] {
  if (encoder.kind === 'classification') {
    return encoder.categories.map(() => 'confidence');
  }
  return encoder.categories.flatMap(() => ['count', 'proportion']);
}

/**
 * The dataset-manifest JSON the downstream pipeline ingests. Attribute
 * columns come from listing data, not from images; integrators replace the
 * empty `attributes` list when they join in their attributes.csv.
 */
export function datasetManifest(manifest: ExtractionManifest): string {
  const encoders: Record<string, { columns: string[]; kinds: string[] }> = {};
  for (const encoder of [...manifest.encoders].sort((a, b) => a.name.localeCompare(b.name))) {
    encoders[encoder.name] = {
      columns: encoderColumns(encoder),
      kinds: encoderKinds(encoder),
    };
  }
  return JSON.stringify(
    { encoders, attributes: [], price_column: 'log_price', cluster_column: 'cluster' },
    null,
    2,
  );
}
