"""HTTP annotation service: task dispatch, label intake, dashboards.

A thin FastAPI facade over CorpusStore + AnnotationEngine. The service owns
one scheduling concern the engine does not: which tasks are currently handed
out. An annotator holds at most one outstanding task; repeating GET /api/task
re-serves it, and a label is accepted only for the task that was served
(anything else is 409). Outstanding tasks count against the per-item quota so
a document is never offered to more annotators than the protocol allows.

Probe reassignments (the self-agreement mechanism) are deliberately not
flagged in task payloads; the annotator must not know they are re-rating.

Every accepted label is flushed and fsynced by the store before the 201
response leaves the building.

Auth is a shared token in the X-Auth-Token header, enforced on every /api
route when the app is created with a token.
"""

import json
from datetime import datetime, timezone
from importlib import resources
from threading import Lock

from fastapi import Depends, FastAPI, Header, HTTPException, Response
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from . import annotation, corpus
from .annotation import AnnotationEngine, AnnotationError
from .corpus import VALID_LABELS


class LabelSubmission(BaseModel):
    annotator_id: str
    doc_id: str
    label: int
    client_timestamp: str | None = None


class AnnotatorRegistration(BaseModel):
    annotator_id: str


def load_guidelines() -> dict:
    ref = resources.files("mbsent").joinpath("data/guidelines.json")
    return json.loads(ref.read_text(encoding="utf-8"))


def load_api_schema() -> dict:
    ref = resources.files("mbsent").joinpath("data/api_schema.json")
    return json.loads(ref.read_text(encoding="utf-8"))


def create_app(store, config=None, token=None, seed=0):
    """Build the FastAPI app around one corpus store.

    ``token=None`` disables authentication (local single-user use);
    otherwise every /api request must carry it in X-Auth-Token.
    """
    engine = AnnotationEngine(store, config, seed=seed)
    guidelines = load_guidelines()
    lock = Lock()
    # annotator_id -> (doc_id, round, is_probe); the single outstanding task
    pending: dict[str, tuple[str, int, bool]] = {}

    def check_token(x_auth_token: str | None = Header(default=None)):
        if token is not None and x_auth_token != token:
            raise HTTPException(status_code=401, detail="bad or missing token")

    app = FastAPI(title="annotation service", dependencies=[Depends(check_token)])
    # The browser console is typically opened from a file or a separate
    # static server, so cross-origin requests must be allowed. Auth is a
    # header, never a cookie, so the wildcard cannot be ridden by a
    # credentialed third-party page.
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.engine = engine
    app.state.store = store

    def quota_blocked(rnd: int, annotator_id: str) -> set[str]:
        held: dict[str, int] = {}
        for holder, (doc_id, r, _probe) in pending.items():
            if r == rnd and holder != annotator_id:
                held[doc_id] = held.get(doc_id, 0) + 1
        n = engine.config.annotators_per_item
        return {
            doc_id
            for doc_id, count in held.items()
            if count + engine.vote_count(doc_id, rnd) >= n
        }

    @app.get("/api/task")
    def get_task(annotator: str, round: int = 1):
        if round not in (1, 2):
            raise HTTPException(status_code=422, detail="round must be 1 or 2")
        with lock:
            if annotator not in store.annotators:
                raise HTTPException(status_code=404, detail=f"unknown annotator {annotator!r}")
            held = pending.get(annotator)
            if held is not None and held[1] == round:
                doc_id = held[0]
            else:
                task = engine.next_task(annotator, round, exclude=quota_blocked(round, annotator))
                if task is None:
                    pending.pop(annotator, None)
                    return Response(status_code=204)
                doc_id, is_probe = task
                pending[annotator] = (doc_id, round, is_probe)
            return {
                "doc_id": doc_id,
                "text": store.documents[doc_id].raw_text,
                "round": round,
                "guidelines_version": guidelines["version"],
            }

    @app.post("/api/label", status_code=201)
    def post_label(sub: LabelSubmission):
        if sub.label not in VALID_LABELS:
            raise HTTPException(status_code=422, detail="label must be -1, 0, or +1")
        if sub.client_timestamp is not None:
            try:
                submitted_at = corpus.parse_timestamp(sub.client_timestamp)
            except ValueError as exc:
                raise HTTPException(status_code=422, detail=str(exc)) from None
        else:
            submitted_at = datetime.now(timezone.utc)
        with lock:
            if sub.annotator_id not in store.annotators:
                raise HTTPException(
                    status_code=404, detail=f"unknown annotator {sub.annotator_id!r}"
                )
            held = pending.get(sub.annotator_id)
            if held is None or held[0] != sub.doc_id:
                raise HTTPException(
                    status_code=409,
                    detail=f"doc {sub.doc_id!r} was not served to {sub.annotator_id!r}",
                )
            doc_id, rnd, is_probe = held
            try:
                result = engine.submit(
                    sub.annotator_id,
                    doc_id,
                    sub.label,
                    rnd,
                    probe=is_probe,
                    submitted_at=submitted_at,
                )
            except AnnotationError as exc:
                raise HTTPException(status_code=409, detail=str(exc)) from None
            del pending[sub.annotator_id]
            return {
                "doc_id": doc_id,
                "round": rnd,
                "verdict": result.verdict.value if result is not None else None,
            }

    @app.post("/api/annotators", status_code=201)
    def register_annotator(reg: AnnotatorRegistration):
        try:
            store.add_annotator(reg.annotator_id)
        except corpus.CorpusError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from None
        return {"annotator_id": reg.annotator_id}

    @app.get("/api/agreement")
    def agreement():
        with lock:
            return engine.agreement_report().to_json()

    @app.get("/api/stats")
    def stats():
        with lock:
            labeled = [
                (doc, store.golds.get(doc_id))
                for doc_id, doc in sorted(store.documents.items())
            ]
            return corpus.compute_stats(labeled).to_json()

    @app.get("/api/guidelines")
    def get_guidelines():
        return guidelines

    @app.get("/api/progress")
    def progress():
        with lock:
            n = engine.config.annotators_per_item
            states = {"gold": 0, "round1_open": 0, "round2_open": 0, "removed": 0}
            for doc_id in store.documents:
                if doc_id in store.golds:
                    states["gold"] += 1
                elif engine.vote_count(doc_id, 1) < n:
                    states["round1_open"] += 1
                else:
                    result = annotation.adjudicate(
                        doc_id, engine._annotations_for(doc_id), engine.config
                    )
                    if result.verdict == annotation.Verdict.REMOVED:
                        states["removed"] += 1
                    elif result.verdict == annotation.Verdict.GOLD:
                        states["gold"] += 1
                    else:
                        states["round2_open"] += 1
            per_annotator = {}
            for ann in store.annotations:
                entry = per_annotator.setdefault(
                    ann.annotator_id, {"labels": 0, "probes": 0}
                )
                entry["probes" if ann.probe else "labels"] += 1
            return {
                "documents": len(store.documents),
                "states": states,
                "per_annotator": per_annotator,
            }

    return app
