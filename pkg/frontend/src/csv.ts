/** Small CSV reader for the simulator's exports: header row, comma
 *  separators, optional double-quoted fields. */

export class SchemaError extends Error {}

export function parseCsv(text: string): string[][] {
  const rows: string[][] = [];
  let row: string[] = [];
  let field = "";
  let inQuotes = false;
  let i = 0;
  const push = () => {
    row.push(field);
    field = "";
  };
  const endRow = () => {
    push();
    // ignore completely empty trailing lines
    if (!(row.length === 1 && row[0] === "")) rows.push(row);
    row = [];
  };
  while (i < text.length) {
    const c = text[i];
    if (inQuotes) {
      if (c === '"') {
        if (text[i + 1] === '"') {
          field += '"';
          i++;
        } else {
          inQuotes = false;
        }
      } else {
        field += c;
      }
    } else if (c === '"') {
      inQuotes = true;
    } else if (c === ",") {
      push();
    } else if (c === "\n") {
      endRow();
    } else if (c !== "\r") {
      field += c;
    }
    i++;
  }
  if (field.length > 0 || row.length > 0) endRow();
  return rows;
}

/** Maps required column names to their indices; a missing column raises a
 *  SchemaError naming it and the file. */
export function columnIndex(
  header: string[],
  required: readonly string[],
  file: string,
): Record<string, number> {
  const index: Record<string, number> = {};
  for (const col of required) {
    const at = header.indexOf(col);
    if (at < 0) {
      throw new SchemaError(`${file}: missing required column "${col}"`);
    }
    index[col] = at;
  }
  return index;
}

export function toNumber(cell: string, col: string, file: string): number {
  const v = Number(cell);
  if (cell.trim() === "" || Number.isNaN(v)) {
    throw new SchemaError(`${file}: column "${col}" holds non-numeric value ${JSON.stringify(cell)}`);
  }
  return v;
}
