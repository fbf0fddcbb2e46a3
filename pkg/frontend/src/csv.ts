import fs from 'fs';
import path from 'path';

/**
 * Serialize one feature table: `id` first, then the given columns.
 * Numbers print via String(), the shortest round-trip form, so rerunning
 * an extraction reproduces files byte for byte.
 */
export function toCsv(columns: string[], ids: string[], rows: number[][]): string {
  const lines = ['id,' + columns.join(',')];
  for (let i = 0; i < ids.length; i++) {
    if (rows[i].length !== columns.length) {
      throw new Error(`row ${ids[i]} has ${rows[i].length} values, expected ${columns.length}`);
    }
    lines.push(ids[i] + ',' + rows[i].map(String).join(','));
  }
  return lines.join('\n') + '\n';
}

/** Write via a temp file and rename, so readers never see partial output. */
export function writeFileAtomic(filePath: string, contents: string): void {
  fs.mkdirSync(path.dirname(filePath), { recursive: true });
  const tmp = `${filePath}.tmp-${process.pid}`;
  fs.writeFileSync(tmp, contents);
  fs.renameSync(tmp, filePath);
}
