import * as fs from "node:fs";

/** Read a JSONL file into parsed lines. A malformed line anywhere but the
 * very end is a hard error; a malformed final line is treated as the torn
 * tail of an interrupted append and reported so the writer can truncate. */
export function readLines(path: string): { objects: unknown[]; goodBytes: number; torn: boolean } {
  if (!fs.existsSync(path)) return { objects: [], goodBytes: 0, torn: false };
  const raw = fs.readFileSync(path, "utf-8");
  const objects: unknown[] = [];
  let goodBytes = 0;
  let cursor = 0;
  while (cursor < raw.length) {
    const nl = raw.indexOf("\n", cursor);
    const end = nl === -1 ? raw.length : nl;
    const line = raw.slice(cursor, end).trim();
    const lineEnd = nl === -1 ? raw.length : nl + 1;
    if (line.length > 0) {
      try {
        objects.push(JSON.parse(line));
      } catch {
        if (end === raw.length || raw.slice(lineEnd).trim() === "") {
          return { objects, goodBytes, torn: true };
        }
        throw new Error(`${path}: malformed JSONL at byte ${cursor}`);
      }
    }
    goodBytes = lineEnd;
    cursor = lineEnd;
  }
  return { objects, goodBytes, torn: false };
}

/** Append-only JSONL sink with id dedup for resumable runs. On open it
 * scans what is already there, drops a torn final line if the previous run
 * was interrupted mid-write, and records the ids already emitted. */
export class JsonlSink {
  readonly path: string;
  readonly emitted: Set<string>;
  private headerPresent: boolean;

  constructor(path: string, idOf: (obj: unknown) => string | null) {
    this.path = path;
    this.emitted = new Set();
    this.headerPresent = false;
    const { objects, goodBytes, torn } = readLines(path);
    if (torn) fs.truncateSync(path, goodBytes);
    if (fs.existsSync(path)) {
      // a run killed between the final record and its newline must not
      // make the next append glue two records onto one line
      const raw = fs.readFileSync(path, "utf-8");
      if (raw.length > 0 && !raw.endsWith("\n")) fs.appendFileSync(path, "\n");
    }
    for (const obj of objects) {
      const id = idOf(obj);
      if (id === null) this.headerPresent = true;
      else this.emitted.add(id);
    }
  }

  hasHeader(): boolean {
    return this.headerPresent;
  }

  writeHeader(header: object): void {
    if (this.headerPresent) return;
    fs.appendFileSync(this.path, JSON.stringify(header) + "\n");
    this.headerPresent = true;
  }

  write(id: string, record: object): boolean {
    if (this.emitted.has(id)) return false;
    fs.appendFileSync(this.path, JSON.stringify(record) + "\n");
    this.emitted.add(id);
    return true;
  }
}

export function readJsonlObjects(path: string): unknown[] {
  const { objects, torn } = readLines(path);
  if (torn) throw new Error(`${path}: torn final line`);
  return objects;
}
