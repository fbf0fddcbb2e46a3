import fs from 'fs';
import path from 'path';
import * as tf from '@tensorflow/tfjs';

/**
 * Filesystem IO for tfjs layers models without tfjs-node: a directory with
 * model.json (topology + weightsManifest) and binary weight shards.
 */
export function fileIOHandler(modelDir: string): tf.io.IOHandler {
  return {
    async load(): Promise<tf.io.ModelArtifacts> {
      const modelJsonPath = path.join(modelDir, 'model.json');
      if (!fs.existsSync(modelJsonPath)) {
        throw new Error(`model weights not found: ${modelJsonPath}`);
      }
      const modelJson = JSON.parse(fs.readFileSync(modelJsonPath, 'utf-8'));
      const weightSpecs: tf.io.WeightsManifestEntry[] = [];
      const buffers: Buffer[] = [];
      for (const group of modelJson.weightsManifest ?? []) {
        weightSpecs.push(...group.weights);
        for (const p of group.paths) {
          buffers.push(fs.readFileSync(path.join(modelDir, p)));
        }
      }
      const joined = Buffer.concat(buffers);
      const weightData = joined.buffer.slice(
        joined.byteOffset,
        joined.byteOffset + joined.byteLength,
      );
      return {
        modelTopology: modelJson.modelTopology,
        format: modelJson.format,
        generatedBy: modelJson.generatedBy,
        convertedBy: modelJson.convertedBy,
        weightSpecs,
        weightData,
      };
    },

    async save(artifacts: tf.io.ModelArtifacts): Promise<tf.io.SaveResult> {
      fs.mkdirSync(modelDir, { recursive: true });
      const weightsFile = 'weights.bin';
      const data = artifacts.weightData as ArrayBuffer;
      fs.writeFileSync(path.join(modelDir, weightsFile), Buffer.from(data));
      const modelJson = {
        modelTopology: artifacts.modelTopology,
        format: artifacts.format,
        generatedBy: artifacts.generatedBy,
        convertedBy: artifacts.convertedBy ?? null,
        weightsManifest: [{ paths: [weightsFile], weights: artifacts.weightSpecs }],
      };
      fs.writeFileSync(path.join(modelDir, 'model.json'), JSON.stringify(modelJson));
      return {
        modelArtifactsInfo: {
          dateSaved: new Date(0), // fixed date keeps saved fixtures reproducible
          modelTopologyType: 'JSON',
        },
      };
    },
  };
}

/** Load a layers model from disk; fatal if weights are missing. */
export async function loadModel(modelDir: string): Promise<tf.LayersModel> {
  return tf.loadLayersModel(fileIOHandler(modelDir));
}
