"""Session state, trial assignment, tokens, and durable persistence.

State is an append-only JSON-lines event log replayed into memory at start.
Every acknowledged mutation is flushed and fsynced before the caller sees
the acknowledgment. Audio and slider tokens are keyed hashes of
(session, item, role) under a per-deployment key, so they are unguessable,
stable within a session, and reconstructible after a restart.
"""

from __future__ import annotations

import base64
import csv
import hashlib
import hmac
import io
import json
import os
import random
import secrets
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from ..audio import make_anchor, read_wav, write_wav
from ..dataio import StudyManifest, StudySettings
from ..errors import DataError

HIDDEN_REFERENCE = "hidden"
ANCHOR_ROLE = "anchor"
EXPLICIT_REFERENCE = "ref"

DEMOGRAPHIC_OPTIONS = {
    "age_bracket": ("18-24", "25-50", "over-50"),
    "production_familiarity": ("not-at-all", "slightly", "moderately", "very",
                               "extremely"),
    "synthesis_knowledge": ("not-at-all", "slightly", "moderately", "very",
                            "extremely"),
    "equipment_spend": ("under-100", "100-250", "250-500", "500-750",
                        "over-750"),
}


class UnknownSessionError(DataError):
    pass


class StudyCompleteError(DataError):
    pass


class SubmissionOrderError(DataError):
    pass


@dataclass
class Session:
    id: str
    demographics: dict
    assigned_items: list
    created_at: float
    completed: int = 0
    scores: dict = field(default_factory=dict)  # trial_index -> {condition: score}


class StudyStore:
    def __init__(self, manifest: StudyManifest, state_dir,
                 settings: StudySettings | None = None):
        if len(manifest.condition_names) != 3:
            raise DataError(
                f"the study needs exactly 3 system conditions, manifest has "
                f"{len(manifest.condition_names)}"
            )
        self.manifest = manifest
        self.settings = settings or manifest.settings
        self.items = {it.id: it for it in manifest.items}
        self.pool = manifest.eligible_items(self.settings.midi_min,
                                            self.settings.midi_max)
        self.state_dir = Path(state_dir)
        self.state_dir.mkdir(parents=True, exist_ok=True)
        self._key = self._load_or_create_key()
        self._lock = threading.Lock()
        self._rng = random.Random()  # OS-seeded; assignment must vary
        self._sessions: dict[str, Session] = {}
        self._tokens: dict[str, tuple] = {}  # audio token -> (item_id, role)
        self._log_path = self.state_dir / "events.jsonl"
        self._replay()
        self._log = open(self._log_path, "a", encoding="utf-8")
        self._render_anchors()

    # -- persistence --------------------------------------------------------

    def _load_or_create_key(self) -> bytes:
        key_path = self.state_dir / "service_key"
        if key_path.exists():
            return bytes.fromhex(key_path.read_text().strip())
        key = secrets.token_bytes(32)
        key_path.write_text(key.hex())
        return key

    def _replay(self):
        if not self._log_path.exists():
            return
        with open(self._log_path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                event = json.loads(line)
                if event["type"] == "session":
                    sess = Session(event["id"], event["demographics"],
                                   event["assigned_items"], event["created_at"])
                    self._sessions[sess.id] = sess
                    self._register_session_tokens(sess)
                elif event["type"] == "response":
                    sess = self._sessions[event["session"]]
                    sess.scores[event["trial_index"]] = event["scores"]
                    sess.completed = len(sess.scores)

    def _append(self, event: dict):
        self._log.write(json.dumps(event, separators=(",", ":")) + "\n")
        self._log.flush()
        os.fsync(self._log.fileno())

    # -- anchors -------------------------------------------------------------

    def _render_anchors(self):
        anchor_dir = self.state_dir / "anchors"
        anchor_dir.mkdir(exist_ok=True)
        for item in self.manifest.items:
            out = anchor_dir / f"{item.id}.wav"
            if not out.exists():
                write_wav(out, make_anchor(read_wav(item.reference)))

    def anchor_path(self, item_id: str) -> Path:
        return self.state_dir / "anchors" / f"{item_id}.wav"

    # -- tokens --------------------------------------------------------------

    def _token(self, kind: str, session_id: str, item_id: str, role: str) -> str:
        mac = hmac.new(self._key, f"{kind}|{session_id}|{item_id}|{role}".encode(),
                       hashlib.sha256).digest()
        return base64.urlsafe_b64encode(mac[:16]).decode().rstrip("=")

    def _slider_roles(self):
        return [HIDDEN_REFERENCE, ANCHOR_ROLE] + \
            [f"cond:{c}" for c in self.manifest.condition_names]

    def _register_session_tokens(self, sess: Session):
        for item_id in sess.assigned_items + [self._practice_item(sess.id).id]:
            for role in [EXPLICIT_REFERENCE] + self._slider_roles():
                tok = self._token("audio", sess.id, item_id, role)
                self._tokens[tok] = (item_id, role)

    def resolve_audio(self, token: str) -> Path:
        entry = self._tokens.get(token)
        if entry is None:
            raise UnknownSessionError("unknown audio token")
        item_id, role = entry
        item = self.items[item_id]
        if role in (EXPLICIT_REFERENCE, HIDDEN_REFERENCE):
            return item.reference
        if role == ANCHOR_ROLE:
            return self.anchor_path(item_id)
        return item.conditions[role.split(":", 1)[1]]

    # -- protocol ------------------------------------------------------------

    def create_session(self, demographics: dict) -> Session:
        for fld, options in DEMOGRAPHIC_OPTIONS.items():
            value = demographics.get(fld)
            if value is None:
                raise DataError(f"missing demographic field: {fld}")
            if value not in options:
                raise DataError(f"invalid value for {fld}: {value!r}")
        extra = set(demographics) - set(DEMOGRAPHIC_OPTIONS)
        if extra:
            raise DataError(f"unknown demographic fields: {sorted(extra)}")
        n = self.settings.trials_per_session
        if len(self.pool) < n:
            raise DataError(
                f"insufficient pool: {len(self.pool)} eligible items for "
                f"{n} trials"
            )
        with self._lock:
            assigned = [it.id for it in self._rng.sample(self.pool, n)]
            sess = Session(secrets.token_urlsafe(16), dict(demographics),
                           assigned, time.time())
            self._append({"type": "session", "id": sess.id,
                          "demographics": sess.demographics,
                          "assigned_items": assigned,
                          "created_at": sess.created_at})
            self._sessions[sess.id] = sess
            self._register_session_tokens(sess)
        return sess

    def _get(self, session_id: str) -> Session:
        sess = self._sessions.get(session_id)
        if sess is None:
            raise UnknownSessionError("unknown session")
        return sess

    def _trial_payload(self, sess: Session, item_id: str, index: int,
                       practice: bool) -> dict:
        sliders = []
        for role in self._slider_roles():
            sliders.append({
                "slider_id": self._token("slider", sess.id, item_id, role),
                "audio_url": "/api/audio/"
                             + self._token("audio", sess.id, item_id, role)
                             + ".wav",
            })
        self._rng.shuffle(sliders)  # fresh order on every call
        ref = self._token("audio", sess.id, item_id, EXPLICIT_REFERENCE)
        return {
            "status": "trial",
            "practice": practice,
            "trial_index": index,
            "trials_per_session": self.settings.trials_per_session,
            "reference_url": f"/api/audio/{ref}.wav",
            "sliders": sliders,
        }

    def _practice_item(self, session_id: str):
        sess = self._sessions.get(session_id)
        assigned = set(sess.assigned_items) if sess else set()
        candidates = [it for it in self.pool if it.id not in assigned] or self.pool
        digest = hmac.new(self._key, f"practice|{session_id}".encode(),
                          hashlib.sha256).digest()
        return candidates[int.from_bytes(digest[:4], "big") % len(candidates)]

    def practice_trial(self, session_id: str) -> dict:
        sess = self._get(session_id)
        item = self._practice_item(session_id)
        return self._trial_payload(sess, item.id, -1, practice=True)

    def next_trial(self, session_id: str) -> dict:
        sess = self._get(session_id)
        if sess.completed >= self.settings.trials_per_session:
            raise StudyCompleteError("study complete")
        item_id = sess.assigned_items[sess.completed]
        return self._trial_payload(sess, item_id, sess.completed, practice=False)

    def submit_ratings(self, session_id: str, trial_index: int,
                       ratings: dict) -> dict:
        sess = self._get(session_id)
        with self._lock:
            if trial_index < sess.completed:
                raise SubmissionOrderError("already submitted")
            if trial_index != sess.completed:
                raise SubmissionOrderError(
                    f"out-of-order submission: expected trial {sess.completed}")
            if sess.completed >= self.settings.trials_per_session:
                raise StudyCompleteError("study complete")
            item_id = sess.assigned_items[trial_index]
            expected = {
                self._token("slider", sess.id, item_id, role): role
                for role in self._slider_roles()
            }
            if set(ratings) != set(expected):
                unknown = set(ratings) - set(expected)
                if unknown:
                    raise DataError(f"unknown slider_id: {sorted(unknown)[0]}")
                raise DataError("all five sliders must be rated")
            scores = {}
            for slider_id, score in ratings.items():
                if isinstance(score, bool) or not isinstance(score, int) \
                        or not 0 <= score <= 100:
                    raise DataError(f"score out of range: {score!r}")
                role = expected[slider_id]
                if role == HIDDEN_REFERENCE:
                    condition = "reference"
                elif role == ANCHOR_ROLE:
                    condition = "anchor"
                else:
                    condition = role.split(":", 1)[1]
                scores[condition] = score
            self._append({"type": "response", "session": sess.id,
                          "trial_index": trial_index, "item_id": item_id,
                          "scores": scores, "ratings": dict(ratings),
                          "submitted_at": time.time()})
            sess.scores[trial_index] = scores
            sess.completed = len(sess.scores)
            return {"accepted": True, "completed": sess.completed}

    # -- export --------------------------------------------------------------

    def export_sessions(self) -> list:
        with self._lock:
            sessions = [
                {
                    "id": s.id,
                    "demographics": dict(s.demographics),
                    "completed": s.completed,
                    "trials_per_session": self.settings.trials_per_session,
                    "complete": s.completed >= self.settings.trials_per_session,
                    "responses": [
                        {"trial_index": i,
                         "item_id": s.assigned_items[i],
                         "scores": dict(s.scores[i])}
                        for i in sorted(s.scores)
                    ],
                }
                for s in self._sessions.values()
            ]
        return sorted(sessions, key=lambda s: s["id"])

    def export_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["session", "age_bracket", "production_familiarity",
                         "synthesis_knowledge", "equipment_spend",
                         "trial_index", "item_id", "condition", "score",
                         "session_complete"])
        for sess in self.export_sessions():
            demo = sess["demographics"]
            prefix = [sess["id"], demo["age_bracket"],
                      demo["production_familiarity"],
                      demo["synthesis_knowledge"], demo["equipment_spend"]]
            for resp in sess["responses"]:
                for condition in sorted(resp["scores"]):
                    writer.writerow(
                        prefix + [resp["trial_index"], resp["item_id"],
                                  condition, resp["scores"][condition],
                                  str(sess["complete"]).lower()])
        return buf.getvalue()

    def close(self):
        self._log.close()
