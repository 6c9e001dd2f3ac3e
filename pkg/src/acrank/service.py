"""Online suggestion service: trie matching, per-session context, and a
pluggable ranker registry behind a small HTTP API.

Immutable request-path state (trie, stats, embeddings, checkpoints) is
shared freely across handlers; the only mutable piece is the session
store, which takes a lock around each append/read.
"""

from __future__ import annotations

import threading
import time
from collections import OrderedDict, deque
from dataclasses import dataclass, field
from typing import Callable

from pydantic import BaseModel

from .features import CONTEXT_QUERIES, ContextState
from .ranking import Ranker
from .trie import PrefixTrie

DEFAULT_TTL_SECONDS = 30 * 60
DEFAULT_K = 10


class UnknownRankerError(KeyError):
    """Requested ranker id is not registered; maps to a client error."""


class SessionStore:
    """Last-K submitted queries per session with lazy TTL eviction.

    Timestamps are epoch milliseconds (what featurization expects); the
    clock is injectable so tests can drive eviction without sleeping.
    """

    def __init__(
        self,
        k: int = CONTEXT_QUERIES,
        ttl_seconds: float = DEFAULT_TTL_SECONDS,
        clock: Callable[[], float] = time.time,
        max_sessions: int = 10_000,
    ):
        if k < 1:
            raise ValueError("k must be >= 1")
        self._k = k
        self._ttl_ms = ttl_seconds * 1000.0
        self._clock = clock
        self._max_sessions = max_sessions
        self._lock = threading.Lock()
        self._sessions: OrderedDict[str, deque[tuple[str, int]]] = OrderedDict()

    def _now_ms(self) -> int:
        return int(self._clock() * 1000.0)

    def record(self, session_id: str, query: str) -> None:
        now = self._now_ms()
        with self._lock:
            buffer = self._sessions.get(session_id)
            if buffer is None:
                buffer = deque(maxlen=self._k)
                self._sessions[session_id] = buffer
            buffer.append((query, now))
            self._sessions.move_to_end(session_id)
            # bound total memory: drop least-recently-touched sessions
            while len(self._sessions) > self._max_sessions:
                self._sessions.popitem(last=False)

    def context(self, session_id: str) -> ContextState:
        now = self._now_ms()
        with self._lock:
            buffer = self._sessions.get(session_id)
            if buffer is None:
                return ContextState()
            live = [(q, ts) for q, ts in buffer if now - ts <= self._ttl_ms]
            if not live:
                del self._sessions[session_id]
                return ContextState()
            if len(live) < len(buffer):
                buffer.clear()
                buffer.extend(live)
            return ContextState.from_past_queries(live, self._k)


@dataclass(frozen=True)
class Suggestion:
    query: str
    score: float


@dataclass(frozen=True)
class SuggestResponse:
    suggestions: tuple[Suggestion, ...]
    ranker_id: str
    latency_ms: float

    def to_dict(self) -> dict:
        return {
            "suggestions": [
                {"query": s.query, "score": s.score} for s in self.suggestions
            ],
            "ranker_id": self.ranker_id,
            "latency_ms": self.latency_ms,
        }


@dataclass
class Service:
    """Request-path facade independent of any HTTP framework."""

    trie: PrefixTrie
    rankers: dict[str, Ranker]
    sessions: SessionStore = field(default_factory=SessionStore)
    default_ranker: str = "mpc"
    model_version: str = "unversioned"

    def __post_init__(self):
        if not self.rankers:
            raise ValueError("at least one ranker required")
        if self.default_ranker not in self.rankers:
            self.default_ranker = sorted(self.rankers)[0]

    def ranker_ids(self) -> list[str]:
        return sorted(self.rankers)

    def suggest(
        self,
        prefix: str,
        session_id: str = "",
        k: int = DEFAULT_K,
        ranker_id: str | None = None,
    ) -> SuggestResponse:
        """Match, featurize with the session's context, rank, truncate.

        Unknown session ids simply mean empty context; unknown ranker ids
        are a caller mistake and raise.
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        chosen = ranker_id or self.default_ranker
        ranker = self.rankers.get(chosen)
        if ranker is None:
            raise UnknownRankerError(chosen)
        started = time.perf_counter()
        candidates = self.trie.lookup(prefix)
        if candidates:
            ctx = self.sessions.context(session_id) if session_id else ContextState()
            ranked = ranker.rank(prefix, candidates, ctx)
            entries = tuple(
                Suggestion(entry.query, entry.score) for entry in ranked.entries[:k])
        else:
            entries = ()
        latency_ms = (time.perf_counter() - started) * 1000.0
        return SuggestResponse(
            suggestions=entries, ranker_id=chosen, latency_ms=latency_ms)

    def submit(self, session_id: str, query: str) -> None:
        if not session_id:
            raise ValueError("session_id required")
        if not query.strip():
            raise ValueError("query must be nonempty")
        self.sessions.record(session_id, query)


class SubmitBody(BaseModel):
    session_id: str
    query: str


def create_app(service: Service):
    """Wrap a Service in the HTTP API.

    GET  /suggest?prefix=&session_id=&k=10&ranker=  -> SuggestResponse
    POST /submit {session_id, query}                -> 204
    GET  /rankers                                   -> {rankers: [...]}
    GET  /health                                    -> {status, model_version}
    """
    from fastapi import FastAPI, HTTPException, Response

    app = FastAPI(title="acrank suggestion service")
    app.state.service = service

    @app.get("/suggest")
    def suggest(prefix: str = "", session_id: str = "", k: int = DEFAULT_K,
                ranker: str | None = None):
        try:
            response = service.suggest(prefix, session_id, k, ranker)
        except UnknownRankerError as exc:
            raise HTTPException(status_code=400,
                                detail=f"unknown ranker: {exc.args[0]}")
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return response.to_dict()

    @app.post("/submit", status_code=204)
    def submit(body: SubmitBody):
        try:
            service.submit(body.session_id, body.query)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return Response(status_code=204)

    @app.get("/rankers")
    def rankers():
        return {"rankers": service.ranker_ids()}

    @app.get("/health")
    def health():
        return {"status": "ok", "model_version": service.model_version}

    return app
