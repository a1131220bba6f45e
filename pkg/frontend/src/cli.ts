#!/usr/bin/env npx tsx
/**
 * Figure renderer CLI.
 *
 * Usage:
 *   npm run render -- --spec specs/mixing.json
 *   npx tsx src/cli.ts render --spec specs/mixing.json
 *
 * Exit codes mirror the artifact producer: 0 on success, 2 when an input
 * fails validation (hash mismatch, wrong run kind, bad spec), 64 on usage
 * errors.
 */

import { pathToFileURL } from "node:url";

import { ArtifactError } from "./artifacts.js";
import { renderSpec, SpecError } from "./render.js";

const USAGE = "usage: render --spec <figure-spec.json>";

export async function main(argv: string[]): Promise<number> {
  if (argv[0] !== "render") {
    console.error(USAGE);
    return 64;
  }
  const rest = argv.slice(1);
  let specPath: string | undefined;
  for (let i = 0; i < rest.length; i++) {
    if (rest[i] === "--spec") {
      specPath = rest[i + 1];
      i += 1;
    } else {
      console.error(`unknown argument ${JSON.stringify(rest[i])}\n${USAGE}`);
      return 64;
    }
  }
  if (!specPath) {
    console.error(USAGE);
    return 64;
  }
  try {
    const out = await renderSpec(specPath);
    console.log(`figure -> ${out}`);
    return 0;
  } catch (e) {
    if (e instanceof ArtifactError || e instanceof SpecError) {
      console.error(`refusing to render: ${(e as Error).message}`);
      return 2;
    }
    console.error((e as Error).stack ?? String(e));
    return 1;
  }
}

if (process.argv[1] !== undefined && import.meta.url === pathToFileURL(process.argv[1]).href) {
  main(process.argv.slice(2)).then((code) => {
    process.exitCode = code;
  });
}
