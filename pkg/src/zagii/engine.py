"""Session lifecycle and the per-round turn pipeline.

One player round runs a fixed pipeline: player_action → NPC turns
(perceive, retrieve, assemble prompt, think, act) → round assessment →
goal check → progression → stall beat → plot summary → entity resolution
→ scene composition → asset updates → optional shadow assessment. All
events are staged against a working copy of the session and committed
atomically at the end; any failure leaves the session exactly as it was.
"""

from __future__ import annotations

import logging
import threading
import time
import uuid
from dataclasses import dataclass, field

from . import narrative, rendering, roleplay, status_manager
from .config import EngineConfig
from .errors import BusySession, SessionClosed, UnknownGame, UnknownSession
from .game_schema import GameDefinition
from .llm_gateway import Gateway
from .message_bus import BusEvent, MessageBus
from .narrative import NarrativeContext
from .persistence import MemoryStorage, SessionRecord
from .session_store import (
    EntityRegistry,
    MemoryStore,
    SessionState,
    apply_event,
    initial_state,
    seed_entities,
)

log = logging.getLogger(__name__)


@dataclass
class Session:
    session_id: str
    game: GameDefinition
    state: SessionState
    memory: MemoryStore
    entities: EntityRegistry
    narrative_ctx: NarrativeContext
    npc_cursor: dict[str, int] = field(default_factory=dict)
    reports: list[dict] = field(default_factory=list)
    record: SessionRecord | None = None
    last_activity: float = field(default_factory=time.time)


class RoundContext:
    """Working copy of a session while a round is in flight.

    ``stage`` assigns the next seq, folds the event into the working state
    (the same fold replay uses), and buffers it for the commit.
    """

    def __init__(self, session: Session, base_seq: int):
        self.game = session.game
        self.session_id = session.session_id
        self.state = session.state
        self.memory = session.memory.clone()
        self.entities = session.entities.clone()
        self.narrative_ctx = session.narrative_ctx.clone()
        self.npc_cursor = dict(session.npc_cursor)
        self.base_seq = base_seq
        self.staged: list[BusEvent] = []
        self.scene = None

    def stage(self, topic: str, payload: dict) -> BusEvent:
        ts = self.state.turn + 1 if topic == "player_action" else self.state.turn
        event = BusEvent(seq=self.base_seq + len(self.staged),
                         session_id=self.session_id, topic=topic,
                         payload=payload, ts=ts)
        self.state = apply_event(self.state, event, self.game)
        self.staged.append(event)
        return event


@dataclass
class RoundResult:
    session_id: str
    turn: int
    events: list[BusEvent]
    npc_actions: list[dict]
    state_changes: list[dict]
    new_beats: list[dict]
    goal_events: list[dict]
    scene: dict | None
    ended: bool
    ending_summary: str | None
    report: dict | None

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "turn": self.turn,
            "events": [{"seq": e.seq, "topic": e.topic, "payload": e.payload, "ts": e.ts}
                       for e in self.events],
            "npc_actions": self.npc_actions,
            "state_changes": self.state_changes,
            "new_beats": self.new_beats,
            "goal_events": self.goal_events,
            "scene": self.scene,
            "ended": self.ended,
            "ending_summary": self.ending_summary,
            "report": self.report,
        }


class Engine:
    """Wires every subsystem behind the session API."""

    def __init__(self, gateway: Gateway, storage=None,
                 config: EngineConfig | None = None, bus: MessageBus | None = None):
        self.gateway = gateway
        self.storage = storage if storage is not None else MemoryStorage()
        self.config = config or EngineConfig()
        self.bus = bus or MessageBus()
        self._sessions: dict[str, Session] = {}
        self._guidance: dict[str, dict] = {}
        self._inflight: set[str] = set()
        self._lock = threading.Lock()

    # --- games ---

    def publish_game(self, definition: GameDefinition) -> None:
        self.storage.save_game(definition)

    def get_game(self, game_id: str) -> GameDefinition | None:
        return self.storage.get_game(game_id)

    def list_games(self) -> list[GameDefinition]:
        return self.storage.list_games()

    # --- session lifecycle ---

    def create_session(self, game_id: str, session_id: str | None = None) -> Session:
        game = self.storage.get_game(game_id)
        if game is None:
            raise UnknownGame(game_id)
        session_id = session_id or f"s-{uuid.uuid4().hex[:12]}"
        with self._lock:
            if session_id in self._sessions:
                raise ValueError(f"session {session_id!r} already exists")

        if game_id not in self._guidance:
            self._guidance[game_id] = status_manager.cold_start(game, self.gateway)

        state = initial_state(game, session_id)
        entities = EntityRegistry(session_id)
        seed_entities(entities, game)
        session = Session(
            session_id=session_id, game=game, state=state,
            memory=MemoryStore(session_id, self.config.weights),
            entities=entities,
            narrative_ctx=NarrativeContext(session_id),
            record=SessionRecord(session_id=session_id, game_id=game_id,
                                 created_at=time.time(),
                                 event_log_ref=f"sessions/{session_id}.log"),
        )
        self.bus.open_session(session_id)

        # The opening chapter's intro is injected before the first round.
        intro = narrative.generate_beat(session.narrative_ctx, state, game, [],
                                        "chapter_start", self.gateway,
                                        config=self.config)
        events = self.bus.publish_batch(session_id,
                                        [("narrative_injected", {"beat": intro.to_payload()})],
                                        ts=0)
        for event in events:
            session.state = apply_event(session.state, event, game)
        self.storage.append_events(session_id, events)
        self.storage.save_record(session.record)

        with self._lock:
            self._sessions[session_id] = session
        return session

    def get_session(self, session_id: str) -> Session:
        with self._lock:
            session = self._sessions.get(session_id)
        if session is None:
            raise UnknownSession(session_id)
        return session

    def end_session(self, session_id: str, reason: str = "player_exit") -> Session:
        session = self.get_session(session_id)
        with self._lock:
            if session_id in self._inflight:
                raise BusySession(session_id)
            self._inflight.add(session_id)
        try:
            if session.state.ended:
                return session
            events = self.bus.publish_batch(
                session_id,
                [("session_ended", {"reason": reason, "ending_summary": None})],
                ts=session.state.turn)
            for event in events:
                session.state = apply_event(session.state, event, session.game)
            self.storage.append_events(session_id, events)
            session.record.ended_at = time.time()
            session.record.round_count = session.state.turn
            self.storage.save_record(session.record)
            return session
        finally:
            with self._lock:
                self._inflight.discard(session_id)

    # --- the round pipeline ---

    def run_player_round(self, session_id: str, utterance: str) -> RoundResult:
        session = self.get_session(session_id)
        timeout = self.config.idle_timeout_s
        if timeout is not None and not session.state.ended \
                and time.time() - session.last_activity > timeout:
            self.end_session(session_id, reason="idle_timeout")
            raise SessionClosed(f"{session_id}: idle timeout")
        with self._lock:
            if session_id in self._inflight:
                raise BusySession(session_id)
            self._inflight.add(session_id)
        try:
            if session.state.ended:
                raise SessionClosed(session_id)
            ctx = RoundContext(session, base_seq=self.bus.next_seq(session_id))
            report = self._pipeline(ctx, session, utterance)
            # Commit: bus delivery, durable log, session swap. Nothing
            # before this point touched the live session.
            self.bus.commit_events(ctx.staged)
            self.storage.append_events(session_id, ctx.staged)
            if report is not None:
                self.storage.append_report(session_id, report)
                session.reports.append(report)
            session.state = ctx.state
            session.memory = ctx.memory
            session.entities = ctx.entities
            session.narrative_ctx = ctx.narrative_ctx
            session.npc_cursor = ctx.npc_cursor
            session.record.round_count = session.state.turn
            session.last_activity = time.time()
            if session.state.ended:
                session.record.ended_at = time.time()
            self.storage.save_record(session.record)
            return self._round_result(session, ctx, report)
        finally:
            with self._lock:
                self._inflight.discard(session_id)

    def _pipeline(self, ctx: RoundContext, session: Session, utterance: str) -> dict | None:
        game = ctx.game
        config = self.config
        guidance = self._guidance.get(game.game_id, {})
        player = next((c for c in game.characters if c.kind == "player"), None)

        ctx.stage("player_action", {
            "utterance": utterance,
            "player_id": player.character_id if player else "player",
        })

        committed = self.bus.log_snapshot(ctx.session_id)

        def alive(npc) -> bool:
            entity = ctx.entities.maybe_get(npc.character_id)
            return entity.alive if entity is not None else True

        effect_hints: list[str] = []
        interaction_targets: list[str] = []
        responders = roleplay.npc_turn_order(game, utterance, config.responder_cap, alive)
        for npc in responders:
            cursor = ctx.npc_cursor.get(npc.character_id, 0)
            window = [e for e in committed if e.seq > cursor] \
                + [e for e in ctx.staged if e.seq > cursor]
            percept = roleplay.perceive(
                game, ctx.session_id, npc.character_id, window,
                ctx.state.turn, ctx.narrative_ctx.current_version(npc.character_id))
            fragments = ctx.memory.retrieve(npc.character_id,
                                            utterance or " ".join(percept.observed_events),
                                            config.fragment_k, ctx.state.turn)
            npc_prompt = narrative.assemble_npc_prompt(game, npc, ctx.state,
                                                       ctx.narrative_ctx, fragments, config)
            plan = roleplay.think(percept, npc, fragments, npc_prompt,
                                  self.gateway, config)
            hints, targets = roleplay.act(ctx, plan)
            effect_hints.extend(hints)
            interaction_targets.extend(targets)
            # The NPC has now seen everything staged so far, its own
            # actions included.
            ctx.npc_cursor[npc.character_id] = ctx.staged[-1].seq

        transcript = "\n".join(
            roleplay.summarize_event(e) for e in ctx.staged
            if e.topic in ("player_action", "npc_action"))

        assessment = status_manager.apply_round(ctx, game, self.gateway, transcript,
                                                effect_hints, guidance)
        check = status_manager.check_goals(ctx.state, game)

        def beat_factory(trigger: str, goal):
            incomplete = self._incomplete_goals(ctx.state, game)
            beat = narrative.generate_beat(ctx.narrative_ctx, ctx.state, game,
                                           incomplete, trigger, self.gateway,
                                           transcript_summary=transcript[-400:],
                                           config=config)
            return beat

        status_manager.advance(ctx, game, self.gateway, check, beat_factory)

        if ctx.state.ended:
            return None  # no events may follow session_ended

        if narrative.detect_stall(ctx.state, config.stall_window):
            beat = beat_factory("stall", None)
            ctx.stage("narrative_injected", {"beat": beat.to_payload()})

        summary = rendering.summarize_round(game, ctx.entities, ctx.state.turn,
                                            transcript, utterance, self.gateway)
        resolved = rendering.resolve_entities(summary, ctx.entities, interaction_targets)
        descriptor = rendering.compose_scene(summary, resolved, ctx.entities)
        for entity_id, record in rendering.update_assets(resolved, descriptor, ctx.entities):
            ctx.stage("asset_updated", {
                "entity_id": entity_id, "asset_id": record.asset_id,
                "modality": record.modality, "version": record.version,
                "derived_from_metadata_version": record.derived_from_metadata_version,
            })
        ctx.scene = descriptor

        report = status_manager.sample_assessment(
            ctx.state, game, self.gateway, assessment,
            round_index=ctx.state.turn, rate=config.sampling_rate)
        return report.to_record() if report is not None else None

    @staticmethod
    def _incomplete_goals(state: SessionState, game: GameDefinition):
        chapter = game.chapter_at(state.chapter_cursor)
        if chapter is None:
            return []
        return [g for g in chapter.goals if state.goal_status.get(g.goal_id) != "achieved"]

    def _round_result(self, session: Session, ctx: RoundContext,
                      report: dict | None) -> RoundResult:
        events = ctx.staged
        scene = getattr(ctx, "scene", None)
        return RoundResult(
            session_id=ctx.session_id,
            turn=ctx.state.turn,
            events=events,
            npc_actions=[e.payload for e in events if e.topic == "npc_action"],
            state_changes=[e.payload for e in events if e.topic == "state_updated"],
            new_beats=[e.payload["beat"] for e in events if e.topic == "narrative_injected"],
            goal_events=[e.payload for e in events
                         if e.topic in ("goal_achieved", "chapter_advanced")],
            scene=scene.to_payload() if scene is not None else None,
            ended=ctx.state.ended,
            ending_summary=ctx.state.ending_summary,
            report=report,
        )

    # --- views ---

    def state_snapshot(self, session_id: str) -> str:
        return self.get_session(session_id).state.to_canonical()

    def guidance_for(self, game_id: str) -> dict:
        return self._guidance.get(game_id, {})

    def rerun_cold_start(self, game_id: str) -> dict:
        game = self.storage.get_game(game_id)
        if game is None:
            raise UnknownGame(game_id)
        self._guidance[game_id] = status_manager.cold_start(game, self.gateway)
        return self._guidance[game_id]
