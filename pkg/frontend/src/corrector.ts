/** Draft-corrector state: rows under edit, per-row validation flags, and
 * the diff badge that nudges reviewers to keep going.
 *
 * Orthography rules live on the server only; every edit is checked
 * through the validation endpoint rather than duplicated tables.
 */
import type { ApiClient, ValidationResult } from "./api.js";
import { CutRow, diffCount, formatCutsFile, parseCutsFile } from "./cuts.js";

export interface RowState extends CutRow {
  validation: ValidationResult | null; // null = not checked yet
}

export class CorrectorState {
  private draft: CutRow[] = [];
  rows: RowState[] = [];

  constructor(private readonly api: ApiClient) {}

  loadDraft(content: string): void {
    this.draft = parseCutsFile(content);
    this.rows = this.draft.map((r) => ({ ...r, validation: null }));
  }

  get loaded(): boolean {
    return this.rows.length > 0;
  }

  async editRow(index: number, text: string): Promise<ValidationResult> {
    const row = this.rows[index];
    if (!row) throw new Error(`no row ${index}`);
    row.text = text;
    row.validation = await this.api.validateText(text);
    return row.validation;
  }

  async validateAll(): Promise<boolean> {
    for (const row of this.rows) {
      row.validation = await this.api.validateText(row.text);
    }
    return this.allValid();
  }

  allValid(): boolean {
    return this.rows.every((r) => r.validation !== null && r.validation.valid);
  }

  /** Edits between the loaded draft and the current text, for the badge. */
  diffBadge(): number {
    return diffCount(this.draft, this.rows);
  }

  /** Serialized cuts file, refused while any row is unchecked or invalid. */
  save(): string {
    if (!this.loaded) throw new Error("no draft loaded");
    if (!this.allValid()) throw new Error("fix or validate all rows before saving");
    return formatCutsFile(this.rows);
  }
}
