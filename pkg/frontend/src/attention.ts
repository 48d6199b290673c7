import Papa from "papaparse";

/**
 * Parsed attention roll-up: rows are second-pass tokens, columns first-pass
 * tokens, one weight per cell.
 */
export interface AttentionRollup {
  readonly columns: readonly string[];
  readonly rows: readonly AttentionRowData[];
}

export interface AttentionRowData {
  readonly label: string;
  readonly values: readonly number[];
}

/** Parse the service's roll-up CSV (header row: empty corner + column tokens). */
export function parseRollup(csv: string): AttentionRollup {
  if (csv.trim() === "") throw new Error("bad roll-up CSV: missing header row");
  const parsed = Papa.parse<string[]>(csv.trim(), { delimiter: ",", skipEmptyLines: true });
  if (parsed.errors.length > 0) {
    throw new Error(`bad roll-up CSV: ${parsed.errors[0]?.message}`);
  }
  const [header, ...body] = parsed.data;
  if (header === undefined || header.length < 2) {
    throw new Error("bad roll-up CSV: missing header row");
  }
  const columns = header.slice(1);
  const rows = body.map((cells, i) => {
    if (cells.length !== columns.length + 1) {
      throw new Error(`bad roll-up CSV: row ${i} has ${cells.length - 1} cells, expected ${columns.length}`);
    }
    const values = cells.slice(1).map((cell) => {
      const value = Number(cell);
      if (!Number.isFinite(value)) throw new Error(`bad roll-up CSV: non-numeric cell ${cell}`);
      return value;
    });
    return { label: cells[0] ?? "", values };
  });
  return { columns, rows };
}

/** Attention row for the selected second-pass token. */
export function attentionRow(rollup: AttentionRollup, tokenIndex: number): AttentionRowData {
  const row = rollup.rows[tokenIndex];
  if (row === undefined) {
    throw new Error(`token index ${tokenIndex} out of range (${rollup.rows.length} rows)`);
  }
  return row;
}
