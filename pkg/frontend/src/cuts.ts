/** Draft/cut files: `start<TAB>end<TAB>transcript`, one row per line.
 *
 * The same format flows through the whole loop: the transcriber CLI
 * writes drafts in it, the corrector edits rows, and the accept command
 * consumes the saved result verbatim.
 */

export interface CutRow {
  start: number;
  end: number;
  text: string;
}

export function parseCutsFile(content: string): CutRow[] {
  const rows: CutRow[] = [];
  content.split("\n").forEach((line, i) => {
    if (!line.trim() || line.startsWith("#")) return;
    const parts = line.split("\t");
    if (parts.length !== 3) {
      throw new Error(`line ${i + 1}: expected start<TAB>end<TAB>transcript`);
    }
    const start = Number(parts[0]);
    const end = Number(parts[1]);
    if (!Number.isFinite(start) || !Number.isFinite(end)) {
      throw new Error(`line ${i + 1}: bad timestamps`);
    }
    rows.push({ start, end, text: parts[2] });
  });
  return rows;
}

export function formatCutsFile(rows: CutRow[]): string {
  return rows.map((r) => `${r.start.toFixed(2)}\t${r.end.toFixed(2)}\t${r.text}\n`).join("");
}

/** Plain Levenshtein distance, for the draft-vs-edit diff badge. */
export function editDistance(a: string, b: string): number {
  if (a.length < b.length) [a, b] = [b, a];
  let prev = Array.from({ length: b.length + 1 }, (_, i) => i);
  for (let i = 1; i <= a.length; i++) {
    const cur = [i];
    for (let j = 1; j <= b.length; j++) {
      cur[j] = Math.min(
        prev[j] + 1,
        cur[j - 1] + 1,
        prev[j - 1] + (a[i - 1] === b[j - 1] ? 0 : 1),
      );
    }
    prev = cur;
  }
  return prev[b.length];
}

/** Total edits between the loaded draft rows and the current rows. */
export function diffCount(draft: CutRow[], edited: CutRow[]): number {
  const joinedDraft = draft.map((r) => r.text).join(" ");
  const joinedEdited = edited.map((r) => r.text).join(" ");
  return editDistance(joinedDraft, joinedEdited);
}
