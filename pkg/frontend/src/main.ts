/** DOM wiring for the three views: prompt browser, recorder, corrector. */
import { ApiClient, SentenceItem } from "./api.js";
import { CorrectorState } from "./corrector.js";
import { MicRecorder } from "./recorder.js";
import {
  UiSession,
  afterSubmit,
  canSubmit,
  discardTake,
  finishRecording,
  newSession,
  startRecording,
  submitBlockedReason,
  takeDurationS,
} from "./session.js";
import { encodeWavPcm16 } from "./wav.js";

const api = new ApiClient("");
let session: UiSession = newSession();
let sentences: SentenceItem[] = [];
let page = 1;
let total = 0;
const PAGE_SIZE = 10;

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing #${id}`);
  return el as T;
};

function setStatus(text: string, error = false): void {
  const el = $("status");
  el.textContent = text;
  el.className = error ? "status error" : "status";
}

// --- profile -----------------------------------------------------------------

async function saveProfile(): Promise<void> {
  const id = ($("profile-id") as HTMLInputElement).value.trim();
  const dialect = ($("profile-dialect") as HTMLInputElement).value.trim() || "unspecified";
  const scheme = ($("scheme-select") as HTMLSelectElement).value;
  if (!id) {
    setStatus("enter a contributor name first", true);
    return;
  }
  const contributor = await api.registerContributor(id, dialect, scheme);
  session = { ...session, contributorId: contributor.id, dialect, preferredScheme: scheme };
  localStorage.setItem("fieldasr-profile", JSON.stringify({ id, dialect, scheme }));
  setStatus(`profile saved: ${contributor.id} (${dialect})`);
  renderRecorder();
}

function restoreProfile(): void {
  const raw = localStorage.getItem("fieldasr-profile");
  if (!raw) return;
  try {
    const p = JSON.parse(raw) as { id: string; dialect: string; scheme: string };
    ($("profile-id") as HTMLInputElement).value = p.id;
    ($("profile-dialect") as HTMLInputElement).value = p.dialect;
    session = { ...session, dialect: p.dialect, preferredScheme: p.scheme };
  } catch {
    localStorage.removeItem("fieldasr-profile");
  }
}

// --- prompt browser ------------------------------------------------------------

async function loadSchemes(): Promise<void> {
  const schemes = await api.schemes();
  const select = $("scheme-select") as HTMLSelectElement;
  select.innerHTML = "";
  for (const name of schemes) {
    const opt = document.createElement("option");
    opt.value = name;
    opt.textContent = name;
    if (name === session.preferredScheme) opt.selected = true;
    select.append(opt);
  }
}

async function loadSentences(): Promise<void> {
  const scheme = ($("scheme-select") as HTMLSelectElement).value || "phonemic";
  const result = await api.listSentences(scheme, page, PAGE_SIZE);
  sentences = result.items;
  total = result.total;
  renderSentences();
}

function renderSentences(): void {
  const list = $("sentence-list");
  list.innerHTML = "";
  if (sentences.length === 0) {
    list.innerHTML = "<li class='empty'>no sentences yet — contribute one below</li>";
  }
  for (const s of sentences) {
    const li = document.createElement("li");
    li.className = s.id === session.currentSentenceId ? "sentence selected" : "sentence";
    const rendering = document.createElement("span");
    rendering.className = "rendering";
    rendering.textContent = s.rendering;
    const phonemic = document.createElement("span");
    phonemic.className = "phonemic";
    phonemic.textContent = s.rendering === s.text_phonemic ? "" : s.text_phonemic;
    li.append(rendering, phonemic);
    li.onclick = () => {
      session = { ...session, currentSentenceId: s.id };
      renderSentences();
      renderRecorder();
    };
    list.append(li);
  }
  $("page-label").textContent =
    `page ${page} / ${Math.max(1, Math.ceil(total / PAGE_SIZE))} (${total} sentences)`;
}

async function contributeSentence(): Promise<void> {
  const input = $("new-sentence") as HTMLInputElement;
  const text = input.value.trim();
  if (!session.contributorId) {
    setStatus("save a profile before contributing", true);
    return;
  }
  const check = await api.validateText(text);
  if (!check.valid) {
    setStatus(`not in the orthography at position ${check.position}: "${check.codepoint}"`, true);
    return;
  }
  await api.submitSentence(session.contributorId, text);
  input.value = "";
  setStatus("sentence submitted for review - it appears once a reviewer activates it");
}

// --- recorder ------------------------------------------------------------------

const recorder = new MicRecorder((rms) => {
  ($("level-meter") as HTMLProgressElement).value = Math.min(1, rms * 4);
});

function renderRecorder(): void {
  const sentence = sentences.find((s) => s.id === session.currentSentenceId);
  $("record-prompt").textContent = sentence
    ? sentence.rendering
    : "select a sentence above";
  ($("btn-record") as HTMLButtonElement).disabled =
    session.state === "recording" || !sentence;
  ($("btn-stop") as HTMLButtonElement).disabled = session.state !== "recording";
  const blocked = submitBlockedReason(session);
  ($("btn-submit") as HTMLButtonElement).disabled = blocked !== null;
  $("submit-hint").textContent = session.state === "review" && blocked ? blocked : "";
  const audio = $("playback") as HTMLAudioElement;
  if (session.state === "review" && session.take) {
    const wav = encodeWavPcm16(session.take.samples, session.take.sampleRate);
    audio.src = URL.createObjectURL(new Blob([wav], { type: "audio/wav" }));
    audio.hidden = false;
    $("take-length").textContent = `${takeDurationS(session.take).toFixed(1)} s`;
  } else {
    audio.hidden = true;
    $("take-length").textContent = "";
  }
}

async function onRecord(): Promise<void> {
  session = startRecording(session);
  renderRecorder();
  await recorder.start(() => void onStop());
}

async function onStop(): Promise<void> {
  if (!recorder.recording) return;
  const take = await recorder.stop();
  session = finishRecording(session, take, () => crypto.randomUUID());
  renderRecorder();
}

async function onSubmit(): Promise<void> {
  if (!canSubmit(session) || !session.take || !session.idempotencyKey) return;
  const wav = new Blob([encodeWavPcm16(session.take.samples, session.take.sampleRate)], {
    type: "audio/wav",
  });
  const key = session.idempotencyKey;
  const btn = $("btn-submit") as HTMLButtonElement;
  btn.disabled = true;
  try {
    // retries reuse the take's idempotency key, so the server never duplicates
    const sub = await api.submitRecording(
      session.currentSentenceId!,
      session.contributorId!,
      wav,
      key,
    );
    session = afterSubmit(session);
    setStatus(`recording ${sub.id} saved (${sub.duration_s.toFixed(1)} s) - thank you!`);
  } catch (e) {
    setStatus(`upload failed (${(e as Error).message}) - press submit to retry`, true);
    btn.disabled = false;
    return;
  }
  renderRecorder();
}

// --- corrector -------------------------------------------------------------------

const corrector = new CorrectorState(api);

function renderCorrector(): void {
  const tbody = $("corrector-rows");
  tbody.innerHTML = "";
  corrector.rows.forEach((row, i) => {
    const tr = document.createElement("tr");
    const time = document.createElement("td");
    const link = document.createElement("a");
    link.href = "#";
    link.textContent = `${row.start.toFixed(2)}-${row.end.toFixed(2)}s`;
    link.onclick = (e) => {
      e.preventDefault();
      const audio = $("corrector-audio") as HTMLAudioElement;
      audio.currentTime = row.start;
      void audio.play();
    };
    time.append(link);
    const cell = document.createElement("td");
    const input = document.createElement("input");
    input.value = row.text;
    input.className = row.validation && !row.validation.valid ? "invalid" : "";
    input.oninput = async () => {
      const result = await corrector.editRow(i, input.value);
      input.className = result.valid ? "" : "invalid";
      input.title = result.valid
        ? ""
        : `unknown symbol "${result.codepoint}" at position ${result.position}`;
      $("diff-badge").textContent = `${corrector.diffBadge()} edits vs draft`;
      ($("btn-save-cuts") as HTMLButtonElement).disabled = !corrector.allValid();
    };
    cell.append(input);
    tr.append(time, cell);
    tbody.append(tr);
  });
  $("diff-badge").textContent = corrector.loaded
    ? `${corrector.diffBadge()} edits vs draft`
    : "";
  ($("btn-save-cuts") as HTMLButtonElement).disabled = !corrector.loaded;
}

async function onDraftChosen(file: File): Promise<void> {
  corrector.loadDraft(await file.text());
  await corrector.validateAll();
  renderCorrector();
}

function onAudioChosen(file: File): void {
  const audio = $("corrector-audio") as HTMLAudioElement;
  audio.src = URL.createObjectURL(file);
  audio.hidden = false;
}

function onSaveCuts(): void {
  const content = corrector.save();
  const blob = new Blob([content], { type: "text/tab-separated-values" });
  const a = document.createElement("a");
  a.href = URL.createObjectURL(blob);
  a.download = "corrected.cuts.tsv";
  a.click();
  setStatus("corrected cut file saved - feed it to the accept command");
}

// --- boot ------------------------------------------------------------------------

async function boot(): Promise<void> {
  restoreProfile();
  try {
    await loadSchemes();
    await loadSentences();
  } catch (e) {
    setStatus(`cannot reach the collection service: ${(e as Error).message}`, true);
    return;
  }
  $("btn-save-profile").onclick = () => void saveProfile();
  ($("scheme-select") as HTMLSelectElement).onchange = () => void loadSentences();
  $("btn-prev").onclick = () => {
    if (page > 1) {
      page -= 1;
      void loadSentences();
    }
  };
  $("btn-next").onclick = () => {
    if (page * PAGE_SIZE < total) {
      page += 1;
      void loadSentences();
    }
  };
  $("btn-contribute").onclick = () => void contributeSentence();
  $("btn-record").onclick = () => void onRecord();
  $("btn-stop").onclick = () => void onStop();
  $("btn-submit").onclick = () => void onSubmit();
  $("btn-discard").onclick = () => {
    session = discardTake(session);
    renderRecorder();
  };
  ($("draft-file") as HTMLInputElement).onchange = (e) => {
    const f = (e.target as HTMLInputElement).files?.[0];
    if (f) void onDraftChosen(f);
  };
  ($("audio-file") as HTMLInputElement).onchange = (e) => {
    const f = (e.target as HTMLInputElement).files?.[0];
    if (f) onAudioChosen(f);
  };
  $("btn-save-cuts").onclick = onSaveCuts;
  renderRecorder();
  renderCorrector();
  setStatus("ready");
}

void boot();
