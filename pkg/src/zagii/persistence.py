"""Durable storage: games, per-session event logs, records, copilot jobs.

Embedded files only — an append-only line-delimited event log per session
(one canonical-serialized event per line; discrepancy reports ride along
as ``{"report": ...}`` lines) plus JSON documents for games and session
records. The interface is narrow so a server deployment can swap in a
database.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from pathlib import Path

from .game_schema import GameDefinition, load_game, serialize_game
from .message_bus import BusEvent


@dataclass
class SessionRecord:
    session_id: str
    game_id: str
    created_at: float
    ended_at: float | None = None
    round_count: int = 0
    event_log_ref: str = ""

    def to_dict(self) -> dict:
        return {"session_id": self.session_id, "game_id": self.game_id,
                "created_at": self.created_at, "ended_at": self.ended_at,
                "round_count": self.round_count, "event_log_ref": self.event_log_ref}

    @staticmethod
    def from_dict(data: dict) -> "SessionRecord":
        return SessionRecord(
            session_id=data["session_id"], game_id=data["game_id"],
            created_at=data["created_at"], ended_at=data.get("ended_at"),
            round_count=data.get("round_count", 0),
            event_log_ref=data.get("event_log_ref", ""),
        )


class MemoryStorage:
    """In-process storage for tests and simulations."""

    def __init__(self):
        self._games: dict[str, GameDefinition] = {}
        self._logs: dict[str, list[str]] = {}
        self._records: dict[str, SessionRecord] = {}
        self._jobs: dict[str, dict] = {}
        self._lock = threading.Lock()

    # games
    def save_game(self, definition: GameDefinition) -> None:
        with self._lock:
            self._games[definition.game_id] = definition

    def get_game(self, game_id: str) -> GameDefinition | None:
        with self._lock:
            return self._games.get(game_id)

    def list_games(self) -> list[GameDefinition]:
        with self._lock:
            return list(self._games.values())

    # event logs
    def append_events(self, session_id: str, events: list[BusEvent]) -> None:
        with self._lock:
            log = self._logs.setdefault(session_id, [])
            log.extend(e.to_canonical() for e in events)

    def append_report(self, session_id: str, report: dict) -> None:
        with self._lock:
            self._logs.setdefault(session_id, []).append(
                json.dumps({"report": report}, sort_keys=True,
                           separators=(",", ":"), ensure_ascii=False))

    def read_log_lines(self, session_id: str) -> list[str]:
        with self._lock:
            return list(self._logs.get(session_id, []))

    # records
    def save_record(self, record: SessionRecord) -> None:
        with self._lock:
            self._records[record.session_id] = record

    def get_record(self, session_id: str) -> SessionRecord | None:
        with self._lock:
            return self._records.get(session_id)

    def list_records(self) -> list[SessionRecord]:
        with self._lock:
            return list(self._records.values())

    # copilot jobs
    def save_job(self, job_id: str, payload: dict) -> None:
        with self._lock:
            self._jobs[job_id] = payload

    def get_job(self, job_id: str) -> dict | None:
        with self._lock:
            return self._jobs.get(job_id)


class FileStorage:
    """Files under a data directory; same interface as MemoryStorage."""

    def __init__(self, data_dir: str | Path):
        self.root = Path(data_dir)
        (self.root / "games").mkdir(parents=True, exist_ok=True)
        (self.root / "sessions").mkdir(parents=True, exist_ok=True)
        (self.root / "copilot").mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def _game_path(self, game_id: str) -> Path:
        return self.root / "games" / f"{game_id}.game.json"

    def _log_path(self, session_id: str) -> Path:
        return self.root / "sessions" / f"{session_id}.log"

    def _record_path(self, session_id: str) -> Path:
        return self.root / "sessions" / f"{session_id}.record.json"

    def save_game(self, definition: GameDefinition) -> None:
        with self._lock:
            self._game_path(definition.game_id).write_bytes(serialize_game(definition))

    def get_game(self, game_id: str) -> GameDefinition | None:
        path = self._game_path(game_id)
        if not path.exists():
            return None
        return load_game(path.read_bytes())

    def list_games(self) -> list[GameDefinition]:
        return [load_game(p.read_bytes())
                for p in sorted((self.root / "games").glob("*.game.json"))]

    def append_events(self, session_id: str, events: list[BusEvent]) -> None:
        if not events:
            return
        with self._lock:
            with self._log_path(session_id).open("a", encoding="utf-8") as fh:
                for event in events:
                    fh.write(event.to_canonical() + "\n")

    def append_report(self, session_id: str, report: dict) -> None:
        with self._lock:
            with self._log_path(session_id).open("a", encoding="utf-8") as fh:
                fh.write(json.dumps({"report": report}, sort_keys=True,
                                    separators=(",", ":"), ensure_ascii=False) + "\n")

    def read_log_lines(self, session_id: str) -> list[str]:
        path = self._log_path(session_id)
        if not path.exists():
            return []
        return path.read_text("utf-8").splitlines()

    def save_record(self, record: SessionRecord) -> None:
        with self._lock:
            self._record_path(record.session_id).write_text(
                json.dumps(record.to_dict(), indent=2, sort_keys=True) + "\n", "utf-8")

    def get_record(self, session_id: str) -> SessionRecord | None:
        path = self._record_path(session_id)
        if not path.exists():
            return None
        return SessionRecord.from_dict(json.loads(path.read_text("utf-8")))

    def list_records(self) -> list[SessionRecord]:
        return [SessionRecord.from_dict(json.loads(p.read_text("utf-8")))
                for p in sorted((self.root / "sessions").glob("*.record.json"))]

    def save_job(self, job_id: str, payload: dict) -> None:
        with self._lock:
            (self.root / "copilot" / f"{job_id}.json").write_text(
                json.dumps(payload, indent=2, sort_keys=True) + "\n", "utf-8")

    def get_job(self, job_id: str) -> dict | None:
        path = self.root / "copilot" / f"{job_id}.json"
        if not path.exists():
            return None
        return json.loads(path.read_text("utf-8"))


def events_from_log_lines(lines: list[str]) -> list[BusEvent]:
    """Events only; report lines are skipped."""
    events = []
    for line in lines:
        if not line.strip():
            continue
        data = json.loads(line)
        if "topic" in data:
            events.append(BusEvent(seq=data["seq"], session_id=data["session_id"],
                                   topic=data["topic"], payload=data["payload"],
                                   ts=data["ts"]))
    return events


def reports_from_log_lines(lines: list[str]) -> list[dict]:
    reports = []
    for line in lines:
        if not line.strip():
            continue
        data = json.loads(line)
        if "report" in data:
            reports.append(data["report"])
    return reports
