/** Typed client for the collection service HTTP API.
 *
 * All rendering data (transliteration schemes included) comes from the
 * server; the client keeps no orthography tables of its own.
 */

export interface SentenceItem {
  id: string;
  text_phonemic: string;
  rendering: string;
  scheme: string;
}

export interface SentencePage {
  items: SentenceItem[];
  page: number;
  page_size: number;
  total: number;
}

export interface Contributor {
  id: string;
  dialect: string;
  preferred_scheme: string;
}

export interface Submission {
  id: string;
  sentence_id: string;
  contributor_id: string;
  duration_s: number;
}

export interface ValidationResult {
  valid: boolean;
  position?: number;
  codepoint?: string;
}

export interface ApiErrorBody {
  code: string;
  message: string;
  position?: number;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly body: ApiErrorBody,
  ) {
    super(`${body.code}: ${body.message}`);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly base: string = "",
    private readonly fetchImpl: FetchLike = (i, init) => fetch(i, init),
    private readonly token: string | null = null,
  ) {}

  private headers(json: boolean): Record<string, string> {
    const h: Record<string, string> = {};
    if (json) h["Content-Type"] = "application/json";
    if (this.token) h["X-Project-Token"] = this.token;
    return h;
  }

  private async parse<T>(res: Response): Promise<T> {
    const body = await res.json().catch(() => ({}));
    if (!res.ok) {
      const err = (body as { error?: ApiErrorBody }).error ?? {
        code: "http_error",
        message: `HTTP ${res.status}`,
      };
      throw new ApiError(res.status, err);
    }
    return body as T;
  }

  async health(): Promise<{ status: string; counts: Record<string, number> }> {
    return this.parse(await this.fetchImpl(`${this.base}/api/health`));
  }

  async schemes(): Promise<string[]> {
    const body = await this.parse<{ schemes: string[] }>(
      await this.fetchImpl(`${this.base}/api/schemes`),
    );
    return body.schemes;
  }

  async listSentences(scheme: string, page = 1, pageSize = 20): Promise<SentencePage> {
    const q = new URLSearchParams({
      scheme,
      page: String(page),
      page_size: String(pageSize),
    });
    return this.parse(await this.fetchImpl(`${this.base}/api/sentences?${q}`));
  }

  async registerContributor(
    id: string,
    dialect: string,
    preferredScheme: string,
  ): Promise<Contributor> {
    return this.parse(
      await this.fetchImpl(`${this.base}/api/contributors`, {
        method: "POST",
        headers: this.headers(true),
        body: JSON.stringify({ id, dialect, preferred_scheme: preferredScheme }),
      }),
    );
  }

  async submitSentence(contributorId: string, text: string): Promise<{ id: string }> {
    return this.parse(
      await this.fetchImpl(`${this.base}/api/sentences`, {
        method: "POST",
        headers: this.headers(true),
        body: JSON.stringify({ contributor_id: contributorId, text }),
      }),
    );
  }

  async submitRecording(
    sentenceId: string,
    contributorId: string,
    wav: Blob,
    idempotencyKey: string,
  ): Promise<Submission> {
    const form = new FormData();
    form.set("sentence_id", sentenceId);
    form.set("contributor_id", contributorId);
    form.set("idempotency_key", idempotencyKey);
    form.set("audio", wav, "take.wav");
    return this.parse(
      await this.fetchImpl(`${this.base}/api/recordings`, {
        method: "POST",
        headers: this.headers(false),
        body: form,
      }),
    );
  }

  async validateText(text: string): Promise<ValidationResult> {
    return this.parse(
      await this.fetchImpl(`${this.base}/api/validate`, {
        method: "POST",
        headers: this.headers(true),
        body: JSON.stringify({ text }),
      }),
    );
  }

  async exportCorpus(): Promise<string> {
    const res = await this.fetchImpl(`${this.base}/api/export`);
    if (!res.ok) throw new ApiError(res.status, { code: "http_error", message: "export failed" });
    return res.text();
  }
}
