/**
 * Minimal CSV reader for the artifact tables this renderer consumes.
 *
 * Every table is header + comma-separated rows with no quoting, so a
 * split-based parser is enough. Cells stay strings; callers pull typed
 * columns through col()/numCol().
 */

export interface Table {
  header: string[];
  rows: string[][];
}

export function parseCsv(text: string): Table {
  const lines = text.split("\n").filter((l) => l.length > 0);
  if (lines.length === 0) {
    throw new Error("empty CSV");
  }
  const header = (lines[0] as string).split(",");
  const rows = lines.slice(1).map((l) => l.split(","));
  for (const r of rows) {
    if (r.length !== header.length) {
      throw new Error(`CSV row has ${r.length} cells, header has ${header.length}`);
    }
  }
  return { header, rows };
}

function colIndex(t: Table, name: string): number {
  const i = t.header.indexOf(name);
  if (i < 0) {
    throw new Error(`CSV has no column ${JSON.stringify(name)}; header: ${t.header.join(",")}`);
  }
  return i;
}

export function col(t: Table, name: string): string[] {
  const i = colIndex(t, name);
  return t.rows.map((r) => r[i] as string);
}

export function numCol(t: Table, name: string): number[] {
  const i = colIndex(t, name);
  return t.rows.map((r) => {
    const v = Number(r[i]);
    if (!Number.isFinite(v)) {
      throw new Error(`non-numeric cell ${JSON.stringify(r[i])} in column ${name}`);
    }
    return v;
  });
}
