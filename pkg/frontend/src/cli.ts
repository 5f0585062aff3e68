#!/usr/bin/env node
/** Exporter CLI.
 *
 *   export --dataset <root> --backbone <id> --out <dir> [--seed N] [--quiet]
 *   verify --dir <dir>
 *
 * Exit codes: 0 success, 1 failed verification or export error, 2 usage.
 */

import { BACKBONES } from "./backbones.js";
import { exportDataset, verifyExport } from "./export.js";

function parseFlags(argv: string[]): Map<string, string> {
  const flags = new Map<string, string>();
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (!arg.startsWith("--")) {
      throw new Error(`unexpected argument ${arg}`);
    }
    const key = arg.slice(2);
    if (key === "quiet") {
      flags.set(key, "true");
      continue;
    }
    const value = argv[i + 1];
    if (value === undefined) throw new Error(`flag --${key} needs a value`);
    flags.set(key, value);
    i++;
  }
  return flags;
}

function usage(): void {
  console.error("usage:");
  console.error("  export --dataset <root> --backbone <id> --out <dir> [--seed N] [--quiet]");
  console.error("  verify --dir <dir>");
  console.error(`backbones: ${Object.keys(BACKBONES).join(", ")}`);
}

export function main(argv: string[]): number {
  const [command, ...rest] = argv;
  let flags: Map<string, string>;
  try {
    flags = parseFlags(rest);
  } catch (err) {
    console.error(String(err instanceof Error ? err.message : err));
    usage();
    return 2;
  }

  if (command === "export") {
    const dataset = flags.get("dataset");
    const backbone = flags.get("backbone");
    const out = flags.get("out");
    if (!dataset || !backbone || !out) {
      usage();
      return 2;
    }
    try {
      const manifest = exportDataset({
        datasetRoot: dataset,
        backboneId: backbone,
        outRoot: out,
        seed: flags.has("seed") ? Number(flags.get("seed")) : 0,
        log: flags.has("quiet") ? undefined : (line) => console.log(line),
      });
      const count = Object.values(manifest.images).flat().length;
      console.log(`exported ${count} images with ${backbone} into ${out}`);
      return 0;
    } catch (err) {
      console.error(`export failed: ${err instanceof Error ? err.message : err}`);
      return 1;
    }
  }

  if (command === "verify") {
    const dir = flags.get("dir");
    if (!dir) {
      usage();
      return 2;
    }
    const report = verifyExport(dir);
    for (const issue of report.issues) {
      console.error(`FAIL ${issue.file}: ${issue.problem}`);
    }
    console.log(
      `checked ${report.checkedFiles} files, ${report.issues.length} issue(s)`,
    );
    return report.issues.length === 0 ? 0 : 1;
  }

  usage();
  return 2;
}

const invokedDirectly = process.argv[1]?.endsWith("cli.js");
if (invokedDirectly) {
  process.exit(main(process.argv.slice(2)));
}
