/**
 * Artifact-directory access with integrity checking.
 *
 * A run directory holds manifest.json plus the data files it lists. Every
 * file is loaded through loadVerified(), which recomputes the SHA-256 of the
 * bytes on disk and refuses to hand them over when the digest disagrees with
 * the manifest. The renderer therefore cannot silently draw from artifacts
 * that were edited, truncated, or mixed between runs.
 */

import { createHash } from "node:crypto";
import { readFile } from "node:fs/promises";
import { join } from "node:path";

export class ArtifactError extends Error {}

export interface Manifest {
  manifest_version: number;
  subcommand: string;
  config_digest: string;
  package_version: string;
  config: Record<string, unknown>;
  derived: Record<string, unknown>;
  artifacts: Record<string, string>;
}

export async function readManifest(dir: string): Promise<Manifest> {
  let raw: string;
  try {
    raw = await readFile(join(dir, "manifest.json"), "utf8");
  } catch (e) {
    throw new ArtifactError(`cannot read manifest in ${dir}: ${(e as Error).message}`);
  }
  let m: Manifest;
  try {
    m = JSON.parse(raw) as Manifest;
  } catch (e) {
    throw new ArtifactError(`manifest.json in ${dir} is not valid JSON: ${(e as Error).message}`);
  }
  if (m.manifest_version !== 1) {
    throw new ArtifactError(`unsupported manifest_version ${m.manifest_version} in ${dir}`);
  }
  if (typeof m.subcommand !== "string" || typeof m.artifacts !== "object" || m.artifacts === null) {
    throw new ArtifactError(`manifest in ${dir} is missing subcommand or artifacts`);
  }
  return m;
}

export function sha256Hex(bytes: Buffer): string {
  return createHash("sha256").update(bytes).digest("hex");
}

/** Read one listed file and verify its digest against the manifest. */
export async function loadVerified(dir: string, manifest: Manifest, name: string): Promise<string> {
  const want = manifest.artifacts[name];
  if (want === undefined) {
    throw new ArtifactError(`${name} is not listed in the manifest of ${dir}`);
  }
  let bytes: Buffer;
  try {
    bytes = await readFile(join(dir, name));
  } catch (e) {
    throw new ArtifactError(`cannot read ${name} in ${dir}: ${(e as Error).message}`);
  }
  const got = sha256Hex(bytes);
  if (got !== want) {
    throw new ArtifactError(
      `hash mismatch for ${name} in ${dir}: manifest says ${want}, file is ${got}`,
    );
  }
  return bytes.toString("utf8");
}

/** A run directory opened for reading, with the manifest already checked. */
export interface RunDir {
  dir: string;
  manifest: Manifest;
  load(name: string): Promise<string>;
}

export async function openRun(dir: string, expectSubcommand: string): Promise<RunDir> {
  const manifest = await readManifest(dir);
  if (manifest.subcommand !== expectSubcommand) {
    throw new ArtifactError(
      `${dir} holds a ${JSON.stringify(manifest.subcommand)} run, need ${JSON.stringify(expectSubcommand)}`,
    );
  }
  return {
    dir,
    manifest,
    load: (name: string) => loadVerified(dir, manifest, name),
  };
}
