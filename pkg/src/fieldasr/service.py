"""Speech-collection web service: sentence prompts in the contributor's
preferred transliteration scheme, recording intake, and corpus export.

Storage is deliberately field-deployable: an append-only JSONL event log
plus a directory of WAV files, no database.  Audio lands via
write-then-rename so a crash never leaves a half-written file that the
export would trip over.  Contributed sentences start inactive until a
reviewer enables them; recordings are only accepted against active
sentences and are capped at 15 seconds so every submission is directly
trainable.
"""
from __future__ import annotations

import json
import os
import tempfile
import threading
import uuid
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path

from fastapi import FastAPI, File, Form, Header, Request, UploadFile
from fastapi.responses import JSONResponse, PlainTextResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from . import __version__
from .corpus import (
    MAX_SEGMENT_SECONDS,
    Manifest,
    Segment,
    export_manifest,
    ingest_wav,
    write_wav,
)
from .errors import AudioFormatError, UnknownSymbolError, ValidationError
from .orthography import normalize, transliterate
from .project import ProjectConfig


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        self.status = status
        self.code = code
        self.message = message
        super().__init__(message)


@dataclass
class Sentence:
    id: str
    text_phonemic: str
    contributed_by: str | None = None
    active: bool = True


@dataclass
class Contributor:
    id: str
    dialect: str
    preferred_scheme: str


@dataclass
class Submission:
    id: str
    sentence_id: str
    contributor_id: str
    audio_path: str
    received_at: str
    duration_s: float
    n_samples: int
    idempotency_key: str | None = None


class CollectStore:
    """Event-sourced state: everything lives in log.jsonl + audio files."""

    def __init__(self, project: ProjectConfig):
        self.project = project
        self.root = project.collect_storage
        self.audio_dir = self.root / "audio"
        self.log_path = self.root / "log.jsonl"
        self.sentences: dict[str, Sentence] = {}
        self.contributors: dict[str, Contributor] = {}
        self.submissions: dict[str, Submission] = {}
        self.by_idempotency: dict[str, str] = {}
        self._write_lock = threading.Lock()
        self.root.mkdir(parents=True, exist_ok=True)
        self.audio_dir.mkdir(parents=True, exist_ok=True)
        self._replay()
        self._seed_sentences()

    def _replay(self):
        if not self.log_path.exists():
            return
        for line in self.log_path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            kind = rec.pop("kind")
            if kind == "sentence":
                self.sentences[rec["id"]] = Sentence(**rec)
            elif kind == "contributor":
                self.contributors[rec["id"]] = Contributor(**rec)
            elif kind == "submission":
                sub = Submission(**rec)
                self.submissions[sub.id] = sub
                if sub.idempotency_key:
                    self.by_idempotency[sub.idempotency_key] = sub.id

    def _seed_sentences(self):
        if self.project.sentences_file is None:
            return
        for line in self.project.sentences_file.read_text(encoding="utf-8").splitlines():
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            text = normalize(text, self.project.orthography)
            if any(s.text_phonemic == text for s in self.sentences.values()):
                continue
            self.add_sentence(text, contributed_by=None, active=True)

    def _append(self, kind: str, payload: dict):
        with self._write_lock:
            with open(self.log_path, "a", encoding="utf-8") as f:
                f.write(json.dumps({"kind": kind, **payload}, ensure_ascii=False) + "\n")
                f.flush()
                os.fsync(f.fileno())

    def add_sentence(self, text: str, contributed_by: str | None, active: bool) -> Sentence:
        with self._write_lock:
            sid = f"s{len(self.sentences):05d}"
        sentence = Sentence(id=sid, text_phonemic=text,
                            contributed_by=contributed_by, active=active)
        self.sentences[sid] = sentence
        self._append("sentence", asdict(sentence))
        return sentence

    def add_contributor(self, cid: str, dialect: str, scheme: str) -> Contributor:
        contributor = Contributor(id=cid, dialect=dialect, preferred_scheme=scheme)
        self.contributors[cid] = contributor
        self._append("contributor", asdict(contributor))
        return contributor

    def add_submission(self, sentence_id: str, contributor_id: str,
                       original: bytes, idempotency_key: str | None) -> tuple[Submission, bool]:
        if idempotency_key and idempotency_key in self.by_idempotency:
            return self.submissions[self.by_idempotency[idempotency_key]], False
        try:
            clip = ingest_wav(original)
        except (AudioFormatError, ValidationError) as e:
            raise ApiError(422, "undecodable_audio", str(e)) from None
        if clip.duration_s > MAX_SEGMENT_SECONDS:
            raise ApiError(
                413, "audio_too_long",
                f"{clip.duration_s:.1f} s exceeds the {MAX_SEGMENT_SECONDS:.0f} s limit",
            )
        sub_id = uuid.uuid4().hex[:12]
        self._write_atomic(self.audio_dir / f"{sub_id}.orig.wav", original)
        self._write_atomic(self.audio_dir / f"{sub_id}.wav", write_wav(clip))
        submission = Submission(
            id=sub_id,
            sentence_id=sentence_id,
            contributor_id=contributor_id,
            audio_path=f"audio/{sub_id}.wav",
            received_at=datetime.now(timezone.utc).replace(microsecond=0).isoformat(),
            duration_s=clip.duration_s,
            n_samples=len(clip.samples),
            idempotency_key=idempotency_key,
        )
        self.submissions[sub_id] = submission
        if idempotency_key:
            self.by_idempotency[idempotency_key] = sub_id
        self._append("submission", asdict(submission))
        return submission, True

    def _write_atomic(self, path: Path, data: bytes):
        fd, tmp = tempfile.mkstemp(dir=self.audio_dir, suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as f:
                f.write(data)
            os.replace(tmp, path)
        except OSError:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    def export(self) -> bytes:
        segments = []
        for sub in sorted(self.submissions.values(), key=lambda s: s.id):
            sentence = self.sentences[sub.sentence_id]
            contributor = self.contributors.get(sub.contributor_id)
            segments.append(Segment(
                id=sub.id,
                source_recording=sub.audio_path,
                start_sample=0,
                end_sample=sub.n_samples,
                transcript=sentence.text_phonemic,
                speaker_id=sub.contributor_id,
                dialect=contributor.dialect if contributor else "unknown",
                split="unassigned",
            ))
        manifest = Manifest(
            orthography_name=self.project.orthography.name, segments=segments
        )
        return export_manifest(manifest, recordings_root=self.root)


class SentenceIn(BaseModel):
    contributor_id: str
    text: str


class ContributorIn(BaseModel):
    id: str | None = None
    dialect: str = "unspecified"
    preferred_scheme: str = "phonemic"


class ValidateIn(BaseModel):
    text: str


def create_app(project: ProjectConfig, static_dir: Path | None = None) -> FastAPI:
    app = FastAPI(title="fieldasr collection service", version=__version__)
    store = CollectStore(project)
    app.state.store = store
    orth = project.orthography

    @app.exception_handler(ApiError)
    async def api_error_handler(request: Request, exc: ApiError):
        return JSONResponse(
            status_code=exc.status,
            content={"error": {"code": exc.code, "message": exc.message}},
        )

    def check_token(token: str | None):
        if project.token is not None and token != project.token:
            raise ApiError(401, "bad_token", "missing or wrong project token")

    def get_scheme(name: str):
        scheme = project.schemes.get(name)
        if scheme is None:
            raise ApiError(400, "unknown_scheme",
                           f"unknown scheme {name!r}; have {sorted(project.schemes)}")
        return scheme

    @app.get("/api/health")
    async def health():
        try:
            fd, tmp = tempfile.mkstemp(dir=store.root)
            os.close(fd)
            os.unlink(tmp)
        except OSError as e:
            return JSONResponse(status_code=503, content={
                "error": {"code": "storage_unwritable", "message": str(e)}})
        return {
            "status": "ok",
            "version": __version__,
            "counts": {
                "sentences": len(store.sentences),
                "contributors": len(store.contributors),
                "submissions": len(store.submissions),
            },
        }

    @app.get("/api/schemes")
    async def schemes():
        return {"schemes": sorted(project.schemes)}

    @app.get("/api/sentences")
    async def list_sentences(scheme: str = "phonemic", page: int = 1, page_size: int = 20):
        sch = get_scheme(scheme)
        if page < 1 or not 1 <= page_size <= 200:
            raise ApiError(400, "bad_page", "page must be >= 1 and page_size in [1, 200]")
        active = sorted(
            (s for s in store.sentences.values() if s.active), key=lambda s: s.id
        )
        start = (page - 1) * page_size
        items = [{
            "id": s.id,
            "text_phonemic": s.text_phonemic,
            "rendering": transliterate(s.text_phonemic, orth, sch),
            "scheme": scheme,
        } for s in active[start:start + page_size]]
        return {"items": items, "page": page, "page_size": page_size,
                "total": len(active)}

    @app.post("/api/contributors", status_code=201)
    async def register_contributor(
        body: ContributorIn, x_project_token: str | None = Header(default=None)
    ):
        check_token(x_project_token)
        get_scheme(body.preferred_scheme)
        cid = body.id or uuid.uuid4().hex[:8]
        contributor = store.add_contributor(cid, body.dialect, body.preferred_scheme)
        return asdict(contributor)

    @app.post("/api/sentences", status_code=201)
    async def submit_sentence(
        body: SentenceIn, x_project_token: str | None = Header(default=None)
    ):
        check_token(x_project_token)
        if not body.text.strip():
            raise ApiError(422, "empty_text", "sentence text is empty")
        try:
            text = normalize(body.text, orth)
        except UnknownSymbolError as e:
            return JSONResponse(status_code=422, content={"error": {
                "code": "invalid_orthography",
                "message": str(e),
                "position": e.position,
            }})
        sentence = store.add_sentence(text, contributed_by=body.contributor_id,
                                      active=False)
        return asdict(sentence)

    @app.post("/api/recordings", status_code=201)
    async def submit_recording(
        sentence_id: str = Form(...),
        contributor_id: str = Form(...),
        idempotency_key: str | None = Form(default=None),
        audio: UploadFile = File(...),
        x_project_token: str | None = Header(default=None),
    ):
        check_token(x_project_token)
        sentence = store.sentences.get(sentence_id)
        if sentence is None:
            raise ApiError(404, "unknown_sentence", f"no sentence {sentence_id!r}")
        if not sentence.active:
            raise ApiError(404, "inactive_sentence",
                           f"sentence {sentence_id!r} is not open for recording")
        if contributor_id not in store.contributors:
            raise ApiError(404, "unknown_contributor",
                           f"no contributor {contributor_id!r}; register first")
        data = await audio.read()
        submission, created = store.add_submission(
            sentence_id, contributor_id, data, idempotency_key
        )
        return JSONResponse(status_code=201 if created else 200,
                            content=asdict(submission))

    @app.post("/api/validate")
    async def validate_text(body: ValidateIn):
        try:
            normalize(body.text, orth)
        except UnknownSymbolError as e:
            return {"valid": False, "position": e.position, "codepoint": e.codepoint}
        return {"valid": True}

    @app.get("/api/export")
    async def export():
        return PlainTextResponse(store.export().decode("utf-8"),
                                 media_type="application/x-ndjson; charset=utf-8")

    if static_dir is not None and static_dir.exists():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")
    return app
