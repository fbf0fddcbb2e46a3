#!/usr/bin/env node
import yargs from 'yargs';
import { hideBin } from 'yargs/helpers';
import { runExtraction } from './extract';
import { loadManifest } from './manifest';

async function main(): Promise<number> {
  const argv = await yargs(hideBin(process.argv))
    .usage('$0 --manifest <extraction-manifest.json> [--images DIR] [--out DIR]')
    .option('manifest', { type: 'string', demandOption: true, describe: 'extraction manifest path' })
    .option('images', { type: 'string', describe: 'override the manifest image directory' })
    .option('out', { type: 'string', describe: 'override the manifest output directory' })
    .strict()
    .parse();

  let manifest = loadManifest(argv.manifest);
  if (argv.images) manifest = { ...manifest, image_dir: argv.images };
  if (argv.out) manifest = { ...manifest, output_dir: argv.out };

  const log = await runExtraction(manifest);
  console.error(
    `done: ${log.images.length} images, ${Object.keys(log.encoders).length} encoders, ` +
      `${log.skipped.length} skipped`,
  );
  return 0;
}

main()
  .then(code => process.exit(code))
  .catch(err => {
    console.error(err instanceof Error ? err.message : err);
    process.exit(1);
  });
