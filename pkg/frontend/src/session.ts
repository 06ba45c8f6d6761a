/** Recording-session state machine.
 *
 * Submit is possible only from the review state with a captured clip of
 * at most 15 seconds; the server enforces the same limit, the client
 * just refuses to waste the upload.
 */

export const MAX_CLIP_SECONDS = 15;

export type RecordingState = "idle" | "recording" | "review";

export interface Take {
  samples: Float32Array;
  sampleRate: number;
}

export interface UiSession {
  contributorId: string | null;
  dialect: string;
  preferredScheme: string;
  currentSentenceId: string | null;
  state: RecordingState;
  take: Take | null;
  /** one idempotency key per take, reused across upload retries */
  idempotencyKey: string | null;
}

export function newSession(): UiSession {
  return {
    contributorId: null,
    dialect: "unspecified",
    preferredScheme: "phonemic",
    currentSentenceId: null,
    state: "idle",
    take: null,
    idempotencyKey: null,
  };
}

export function takeDurationS(take: Take): number {
  return take.samples.length / take.sampleRate;
}

export function startRecording(s: UiSession): UiSession {
  if (s.state === "recording") throw new Error("already recording");
  if (s.currentSentenceId === null) throw new Error("pick a sentence first");
  return { ...s, state: "recording", take: null, idempotencyKey: null };
}

export function finishRecording(s: UiSession, take: Take, makeKey: () => string): UiSession {
  if (s.state !== "recording") throw new Error("not recording");
  return { ...s, state: "review", take, idempotencyKey: makeKey() };
}

export function discardTake(s: UiSession): UiSession {
  return { ...s, state: "idle", take: null, idempotencyKey: null };
}

export function afterSubmit(s: UiSession): UiSession {
  return discardTake(s);
}

/** null when submittable, otherwise the reason submit is disabled */
export function submitBlockedReason(s: UiSession): string | null {
  if (s.state !== "review" || s.take === null) return "record a take first";
  if (s.contributorId === null) return "register a contributor profile first";
  const dur = takeDurationS(s.take);
  if (dur > MAX_CLIP_SECONDS) {
    return `take is ${dur.toFixed(1)} s; the limit is ${MAX_CLIP_SECONDS} s`;
  }
  return null;
}

export function canSubmit(s: UiSession): boolean {
  return submitBlockedReason(s) === null;
}
