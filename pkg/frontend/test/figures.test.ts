import { cp, mkdtemp, readdir, readFile, writeFile } from "node:fs/promises";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import { sha256Hex } from "../src/artifacts.js";
import { main } from "../src/cli.js";
import { renderSpec } from "../src/render.js";

const ROOT = new URL("..", import.meta.url).pathname;
const ARTIFACTS = join(ROOT, "artifacts");
const SPECS = join(ROOT, "specs");

const SPEC_FILES = ["spectrum.json", "overlay.json", "convergence.json", "mixing.json", "paths.json"];

const LANDMARKS: Record<string, string[]> = {
  "spectrum.json": ["e_1 = ", "squared Slater determinant", "phi1"],
  "overlay.json": ["stationary reference", "sampled walks"],
  "convergence.json": ["sampling noise floor", "area tilt lambda", "KS"],
  "mixing.json": ["fit slope", "1e-1", "horizons K"],
  "paths.json": ["Sampled walk bundle", "time step"],
};

async function bundledDir(prefix: string): Promise<string> {
  const names = await readdir(ARTIFACTS);
  const hit = names.find((n) => n.startsWith(prefix));
  if (!hit) throw new Error(`no bundled ${prefix}* directory`);
  return join(ARTIFACTS, hit);
}

async function tempSpec(spec: object): Promise<string> {
  const tmp = await mkdtemp(join(tmpdir(), "plots-spec-"));
  const path = join(tmp, "spec.json");
  await writeFile(path, JSON.stringify(spec), "utf8");
  return path;
}

describe("the five figure kinds render from the bundled artifacts", () => {
  for (const file of SPEC_FILES) {
    it(`renders ${file}`, async () => {
      const out = await renderSpec(join(SPECS, file));
      const svg = await readFile(out, "utf8");
      expect(svg.startsWith("<svg ")).toBe(true);
      expect(svg.endsWith("</svg>\n")).toBe(true);
      for (const landmark of LANDMARKS[file] as string[]) {
        expect(svg, `landmark ${JSON.stringify(landmark)}`).toContain(landmark);
      }
    });
  }

  it("re-renders every figure byte for byte", async () => {
    for (const file of SPEC_FILES) {
      const out = await renderSpec(join(SPECS, file));
      const first = await readFile(out);
      const out2 = await renderSpec(join(SPECS, file));
      expect(out2).toBe(out);
      const second = await readFile(out2);
      expect(first.equals(second), `${file} drifted between renders`).toBe(true);
    }
  });
});

describe("refusals", () => {
  it("refuses when a consumed file no longer matches its manifest digest", async () => {
    const src = await bundledDir("mixing-");
    const tmp = await mkdtemp(join(tmpdir(), "plots-tamper-"));
    await cp(src, tmp, { recursive: true });
    const csvPath = join(tmp, "mixing.csv");
    await writeFile(csvPath, (await readFile(csvPath, "utf8")).replace("0.16", "0.17"), "utf8");
    const spec = await tempSpec({ kind: "mixing", inputs: { mixing: tmp }, out: "fig.svg" });
    await expect(renderSpec(spec)).rejects.toThrow(/hash mismatch/);
  });

  it("refuses when the recorded mixing slope cannot be refit from the rows", async () => {
    const src = await bundledDir("mixing-");
    const tmp = await mkdtemp(join(tmpdir(), "plots-tamper-"));
    await cp(src, tmp, { recursive: true });
    // rewrite summary.json with a nudged slope and keep the manifest digest
    // consistent, so the refusal can only come from the refit cross-check
    const summaryPath = join(tmp, "summary.json");
    const summary = JSON.parse(await readFile(summaryPath, "utf8")) as { slope: number };
    summary.slope += 1e-6;
    const newBytes = Buffer.from(JSON.stringify(summary), "utf8");
    await writeFile(summaryPath, newBytes);
    const manifestPath = join(tmp, "manifest.json");
    const manifest = JSON.parse(await readFile(manifestPath, "utf8")) as {
      artifacts: Record<string, string>;
    };
    manifest.artifacts["summary.json"] = sha256Hex(newBytes);
    await writeFile(manifestPath, JSON.stringify(manifest), "utf8");
    const spec = await tempSpec({ kind: "mixing", inputs: { mixing: tmp }, out: "fig.svg" });
    await expect(renderSpec(spec)).rejects.toThrow(/slope refit disagrees/);
  });

  it("refuses an input directory produced by the wrong subcommand", async () => {
    const dir = await bundledDir("mixing-");
    const spec = await tempSpec({ kind: "overlay", inputs: { walks: dir }, out: "fig.svg" });
    await expect(renderSpec(spec)).rejects.toThrow(/holds a "mixing" run/);
  });

  it("refuses specs with unknown kinds or missing inputs", async () => {
    const bad1 = await tempSpec({ kind: "pie", inputs: {}, out: "fig.svg" });
    await expect(renderSpec(bad1)).rejects.toThrow(/unknown kind/);
    const bad2 = await tempSpec({ kind: "mixing", inputs: {}, out: "fig.svg" });
    await expect(renderSpec(bad2)).rejects.toThrow(/needs input "mixing"/);
  });
});

describe("command line", () => {
  it("renders a spec and exits 0", async () => {
    const code = await main(["render", "--spec", join(SPECS, "mixing.json")]);
    expect(code).toBe(0);
  });

  it("exits 64 on usage errors", async () => {
    expect(await main([])).toBe(64);
    expect(await main(["render"])).toBe(64);
    expect(await main(["render", "--bogus"])).toBe(64);
    expect(await main(["draw", "--spec", "x.json"])).toBe(64);
  });

  it("exits 2 when the figure spec or its inputs fail validation", async () => {
    const bad = await tempSpec({ kind: "pie", inputs: {}, out: "fig.svg" });
    expect(await main(["render", "--spec", bad])).toBe(2);
    expect(await main(["render", "--spec", "/does/not/exist.json"])).toBe(2);
  });
});
