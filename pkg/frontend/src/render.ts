/**
 * Figure-spec loading and rendering.
 *
 * A figure spec is a small JSON file naming the figure kind, the artifact
 * run directories it reads, and the output path. Input and output paths are
 * resolved relative to the spec file so a spec can live next to the bundle
 * it describes. Each named input must be a run directory produced by the
 * matching subcommand; the manifest check in openRun() enforces that.
 */

import { mkdir, readFile, writeFile } from "node:fs/promises";
import { dirname, resolve } from "node:path";

import { ArtifactError, openRun } from "./artifacts.js";
import {
  convergenceFigure,
  mixingFigure,
  overlayFigure,
  pathsFigure,
  spectrumFigure,
  type MixingSummary,
} from "./figures.js";

export const FIGURE_KINDS = ["spectrum", "overlay", "convergence", "mixing", "paths"] as const;
export type FigureKind = (typeof FIGURE_KINDS)[number];

/** Input roles each kind requires, mapped to the producing subcommand. */
const REQUIRED_INPUTS: Record<FigureKind, Record<string, string>> = {
  spectrum: { spectrum: "spectrum", kernel: "kernel" },
  overlay: { walks: "sample-walks" },
  convergence: { tilt: "tilt-convergence" },
  mixing: { mixing: "mixing" },
  paths: { walks: "sample-walks" },
};

export interface FigureSpec {
  kind: FigureKind;
  inputs: Record<string, string>;
  out: string;
  max_samples?: number;
}

export class SpecError extends Error {}

export async function loadSpec(path: string): Promise<FigureSpec> {
  let raw: string;
  try {
    raw = await readFile(path, "utf8");
  } catch (e) {
    throw new SpecError(`cannot read spec ${path}: ${(e as Error).message}`);
  }
  let spec: FigureSpec;
  try {
    spec = JSON.parse(raw) as FigureSpec;
  } catch (e) {
    throw new SpecError(`spec ${path} is not valid JSON: ${(e as Error).message}`);
  }
  if (!FIGURE_KINDS.includes(spec.kind)) {
    throw new SpecError(`spec ${path}: unknown kind ${JSON.stringify(spec.kind)}; known: ${FIGURE_KINDS.join(", ")}`);
  }
  if (typeof spec.out !== "string" || spec.out.length === 0) {
    throw new SpecError(`spec ${path}: missing output path`);
  }
  if (typeof spec.inputs !== "object" || spec.inputs === null) {
    throw new SpecError(`spec ${path}: missing inputs`);
  }
  for (const role of Object.keys(REQUIRED_INPUTS[spec.kind])) {
    if (typeof spec.inputs[role] !== "string") {
      throw new SpecError(`spec ${path}: kind ${spec.kind} needs input ${JSON.stringify(role)}`);
    }
  }
  if (spec.max_samples !== undefined && !(Number.isInteger(spec.max_samples) && spec.max_samples > 0)) {
    throw new SpecError(`spec ${path}: max_samples must be a positive integer`);
  }
  return spec;
}

/** Render one spec file; returns the resolved output path. */
export async function renderSpec(specPath: string): Promise<string> {
  const spec = await loadSpec(specPath);
  const base = dirname(resolve(specPath));
  const dirFor = (role: string) => resolve(base, spec.inputs[role] as string);

  let svg: string;
  switch (spec.kind) {
    case "spectrum": {
      const spectrumRun = await openRun(dirFor("spectrum"), "spectrum");
      const kernelRun = await openRun(dirFor("kernel"), "kernel");
      svg = spectrumFigure(
        await spectrumRun.load("eigenvalues.csv"),
        await spectrumRun.load("modes.csv"),
        await kernelRun.load("slater_grid.csv"),
      );
      break;
    }
    case "overlay": {
      const run = await openRun(dirFor("walks"), "sample-walks");
      svg = overlayFigure(await run.load("marginal.csv"));
      break;
    }
    case "convergence": {
      const run = await openRun(dirFor("tilt"), "tilt-convergence");
      svg = convergenceFigure(await run.load("convergence.csv"));
      break;
    }
    case "mixing": {
      const run = await openRun(dirFor("mixing"), "mixing");
      const csv = await run.load("mixing.csv");
      let summary: MixingSummary;
      try {
        summary = JSON.parse(await run.load("summary.json")) as MixingSummary;
      } catch (e) {
        if (e instanceof ArtifactError) throw e;
        throw new ArtifactError(`summary.json in ${run.dir} is not valid JSON: ${(e as Error).message}`);
      }
      if (typeof summary.slope !== "number") {
        throw new ArtifactError(`summary.json in ${run.dir} has no numeric slope`);
      }
      svg = mixingFigure(csv, summary);
      break;
    }
    case "paths": {
      const run = await openRun(dirFor("walks"), "sample-walks");
      svg = pathsFigure(await run.load("paths.csv"), spec.max_samples ?? 40);
      break;
    }
  }

  const outPath = resolve(base, spec.out);
  await mkdir(dirname(outPath), { recursive: true });
  await writeFile(outPath, svg, "utf8");
  return outPath;
}
