import path from 'path';
import { extractClassification } from './cnn';
import { toCsv, writeFileAtomic } from './csv';
import { loadImages } from './images';
import { datasetManifest, encoderColumns, ExtractionManifest } from './manifest';
import { loadModel } from './models';
import { extractSegmentation } from './panoptic';

export interface ExtractionLog {
  images: { id: string; file: string }[];
  skipped: { file: string; reason: string }[];
  encoders: Record<string, { rows: number; columns: number }>;
}

/**
 * Run every encoder in the manifest over the image directory and write one
 * feature CSV per encoder, a dataset manifest for the downstream pipeline,
 * and extraction_log.json accounting for every input file.
 */
export async function runExtraction(manifest: ExtractionManifest): Promise<ExtractionLog> {
  const { images, skipped } = loadImages(manifest.image_dir);
  for (const skip of skipped) {
    console.error(`skipping ${skip.file}: ${skip.reason}`);
  }
  if (images.length === 0) {
    throw new Error(`no decodable images in ${manifest.image_dir}`);
  }
  const ids = images.map(img => img.id);
  const log: ExtractionLog = {
    images: images.map(({ id, file }) => ({ id, file })),
    skipped,
    encoders: {},
  };

  for (const encoder of manifest.encoders) {
    const model = await loadModel(encoder.model_path);
    const rows =
      encoder.kind === 'classification'
        ? await extractClassification(model, encoder, images, manifest.batch_size)
        : await extractSegmentation(model, encoder, images, manifest.batch_size);
    model.dispose();
    const columns = encoderColumns(encoder);
    writeFileAtomic(
      path.join(manifest.output_dir, `${encoder.name}.csv`),
      toCsv(columns, ids, rows),
    );
    log.encoders[encoder.name] = { rows: rows.length, columns: columns.length };
    console.error(`${encoder.name}: ${rows.length} rows x ${columns.length} columns`);
  }

  writeFileAtomic(path.join(manifest.output_dir, 'manifest.json'), datasetManifest(manifest));
  writeFileAtomic(
    path.join(manifest.output_dir, 'extraction_log.json'),
    JSON.stringify(log, null, 2),
  );
  for (const img of images) {
    img.tensor.dispose();
  }
  return log;
}
