"""Event-sourced session state, NPC memory, and the entity registry.

SessionState evolves only through ``apply_event``; replaying a session's
event log from the initial state reproduces the live snapshot exactly,
byte-identical under canonical serialization. Memory fragments and
entities are session memory shared by the roleplay, narrative, and
rendering subsystems.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Any

from .config import RetrievalWeights
from .errors import (
    GapDetected,
    InvalidFragment,
    MutationAfterEnd,
    SessionClosed,
    UnknownEntity,
)
from .game_schema import GameDefinition
from .keywords import keyword_set, overlap_relevance
from .message_bus import BusEvent

ASSET_MODALITIES = ("image", "sound", "music", "motion")


# --- live state -------------------------------------------------------------

@dataclass(frozen=True)
class SessionState:
    session_id: str
    game_id: str
    chapter_cursor: int = 0
    anchor_values: dict[str, Any] = field(default_factory=dict)
    goal_status: dict[str, str] = field(default_factory=dict)      # goal_id -> pending|achieved
    subgoal_status: dict[str, str] = field(default_factory=dict)   # subgoal_id -> pending|achieved
    turn: int = 0
    ended: bool = False
    ending_summary: str | None = None
    last_seq: int = 0
    last_progress_turn: int = 0  # last turn an anchor changed or a subgoal latched

    def to_canonical(self) -> str:
        return json.dumps({
            "anchor_values": self.anchor_values,
            "chapter_cursor": self.chapter_cursor,
            "ended": self.ended,
            "ending_summary": self.ending_summary,
            "game_id": self.game_id,
            "goal_status": self.goal_status,
            "last_progress_turn": self.last_progress_turn,
            "last_seq": self.last_seq,
            "session_id": self.session_id,
            "subgoal_status": self.subgoal_status,
            "turn": self.turn,
        }, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def initial_state(game: GameDefinition, session_id: str) -> SessionState:
    state = SessionState(
        session_id=session_id,
        game_id=game.game_id,
        chapter_cursor=0,
        anchor_values={a.anchor_id: a.initial_value for a in game.anchors},
        goal_status={g.goal_id: "pending" for _, g in game.iter_goals()},
        subgoal_status={s.subgoal_id: "pending"
                        for _, g in game.iter_goals() for s in g.subgoals},
    )
    # Initial anchor values may already satisfy first-chapter subgoals
    # (a health value above zero, say); latch them from the start so the
    # fold and the live pipeline agree on turn 0.
    status, latched = _latch_subgoals(state, game)
    if latched:
        state = replace(state, subgoal_status=status)
    return state


def _latch_subgoals(state: SessionState, game: GameDefinition) -> tuple[dict[str, str], bool]:
    """Re-evaluate pending subgoals of the current chapter; latched ones stay.

    Returns (new subgoal_status, any_newly_latched). Import is deferred to
    keep the predicate evaluator in one authoritative module.
    """
    from .status_manager import eval_predicate

    chapter = game.chapter_at(state.chapter_cursor)
    if chapter is None:
        return state.subgoal_status, False
    status = dict(state.subgoal_status)
    latched = False
    for goal in chapter.goals:
        for sub in goal.subgoals:
            if status.get(sub.subgoal_id) == "achieved":
                continue
            value = state.anchor_values.get(sub.anchor_id)
            if value is not None and eval_predicate(value, sub.predicate,
                                                    game.anchor(sub.anchor_id)):
                status[sub.subgoal_id] = "achieved"
                latched = True
    return status, latched


def apply_event(state: SessionState, event: BusEvent, game: GameDefinition) -> SessionState:
    """Deterministic fold: state' is a pure function of (state, event).

    Seqs must be contiguous; nothing but session_ended may follow an ended
    session.
    """
    if event.seq != state.last_seq + 1:
        raise GapDetected(f"expected seq {state.last_seq + 1}, got {event.seq}")
    if state.ended:
        raise MutationAfterEnd(f"event {event.seq} after session end")

    state = replace(state, last_seq=event.seq)
    topic = event.topic
    if topic == "player_action":
        return replace(state, turn=state.turn + 1)
    if topic == "state_updated":
        payload = event.payload
        values = dict(state.anchor_values)
        values[payload["anchor_id"]] = payload["new"]
        state = replace(state, anchor_values=values, last_progress_turn=event.ts)
        status, latched = _latch_subgoals(state, game)
        if latched:
            state = replace(state, subgoal_status=status, last_progress_turn=event.ts)
        return state
    if topic == "goal_achieved":
        status = dict(state.goal_status)
        status[event.payload["goal_id"]] = "achieved"
        return replace(state, goal_status=status)
    if topic == "chapter_advanced":
        state = replace(state, chapter_cursor=event.payload["to_index"])
        # A chapter can open with some subgoals already met by prior anchors.
        status, latched = _latch_subgoals(state, game)
        if latched:
            state = replace(state, subgoal_status=status, last_progress_turn=event.ts)
        return state
    if topic == "session_ended":
        return replace(state, ended=True,
                       ending_summary=event.payload.get("ending_summary"))
    # npc_action / narrative_injected / asset_updated leave state untouched
    return state


def fold_events(game: GameDefinition, session_id: str, events: list[BusEvent]) -> SessionState:
    state = initial_state(game, session_id)
    for event in events:
        state = apply_event(state, event, game)
    return state


# --- memory fragments -------------------------------------------------------

@dataclass(frozen=True)
class MemoryFragment:
    fragment_id: str
    session_id: str
    character_id: str
    content: str
    turn_created: int
    salience: float
    keywords: frozenset[str]


def score_fragment(fragment: MemoryFragment, query_keywords: frozenset[str],
                   current_turn: int, weights: RetrievalWeights) -> float:
    relevance = overlap_relevance(query_keywords, fragment.keywords)
    recency = 1.0 / (1.0 + current_turn - fragment.turn_created)
    return (weights.relevance * relevance
            + weights.recency * recency
            + weights.salience * fragment.salience)


class MemoryStore:
    """Per-session, per-character fragment store with deterministic top-k."""

    def __init__(self, session_id: str, weights: RetrievalWeights | None = None):
        self.session_id = session_id
        self.weights = weights or RetrievalWeights()
        self._fragments: dict[str, list[MemoryFragment]] = {}
        self._counter = 0

    def add_fragment(self, character_id: str, content: str, salience: float,
                     turn: int) -> str:
        if not content or not content.strip():
            raise InvalidFragment("fragment content must be nonempty")
        if not 0.0 <= salience <= 1.0:
            raise InvalidFragment(f"salience {salience} outside [0, 1]")
        self._counter += 1
        fragment = MemoryFragment(
            fragment_id=f"m{self._counter:04d}",
            session_id=self.session_id,
            character_id=character_id,
            content=content,
            turn_created=turn,
            salience=salience,
            keywords=keyword_set(content),
        )
        self._fragments.setdefault(character_id, []).append(fragment)
        return fragment.fragment_id

    def fragments_for(self, character_id: str) -> list[MemoryFragment]:
        return list(self._fragments.get(character_id, []))

    def retrieve(self, character_id: str, query: str, k: int,
                 current_turn: int) -> list[MemoryFragment]:
        """Top-k by 0.5·relevance + 0.3·recency + 0.2·salience.

        Ties break toward newer fragments, then lexical fragment_id.
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        query_keywords = keyword_set(query)
        candidates = self._fragments.get(character_id, [])
        ranked = sorted(
            candidates,
            key=lambda f: (-score_fragment(f, query_keywords, current_turn, self.weights),
                           -f.turn_created, f.fragment_id),
        )
        return ranked[:k]

    def clone(self) -> "MemoryStore":
        twin = MemoryStore(self.session_id, self.weights)
        twin._fragments = {cid: list(frs) for cid, frs in self._fragments.items()}
        twin._counter = self._counter
        return twin


# --- entities and versioned assets ------------------------------------------

@dataclass(frozen=True)
class AssetRecord:
    asset_id: str
    modality: str
    descriptor: str
    version: int
    derived_from_metadata_version: int


@dataclass
class Entity:
    entity_id: str
    session_id: str
    kind: str
    name: str
    description: str
    attributes: dict[str, str] = field(default_factory=dict)
    assets: list[AssetRecord] = field(default_factory=list)
    alive: bool = True
    metadata_version: int = 1

    def latest_asset(self, modality: str) -> AssetRecord | None:
        versions = [a for a in self.assets if a.modality == modality]
        return max(versions, key=lambda a: a.version) if versions else None

    def asset_stale(self, modality: str) -> bool:
        latest = self.latest_asset(modality)
        return latest is not None and latest.derived_from_metadata_version < self.metadata_version

    def clone(self) -> "Entity":
        return Entity(entity_id=self.entity_id, session_id=self.session_id,
                      kind=self.kind, name=self.name, description=self.description,
                      attributes=dict(self.attributes), assets=list(self.assets),
                      alive=self.alive, metadata_version=self.metadata_version)


class EntityRegistry:
    """Session entities with version-bumped metadata and asset histories."""

    def __init__(self, session_id: str):
        self.session_id = session_id
        self._entities: dict[str, Entity] = {}
        self._closed = False

    def close(self) -> None:
        self._closed = True

    def _check_open(self) -> None:
        if self._closed:
            raise SessionClosed(self.session_id)

    def upsert(self, entity_id: str, kind: str | None = None, name: str | None = None,
               description: str | None = None, attributes: dict[str, str] | None = None,
               alive: bool | None = None) -> Entity:
        """Create, or update metadata. Updates bump metadata_version by one;
        the asset list is never touched here."""
        self._check_open()
        entity = self._entities.get(entity_id)
        if entity is None:
            if kind is None or name is None:
                raise ValueError("creating an entity requires kind and name")
            entity = Entity(entity_id=entity_id, session_id=self.session_id,
                            kind=kind, name=name, description=description or "",
                            attributes=dict(attributes or {}))
            self._entities[entity_id] = entity
            return entity
        changed = False
        if name is not None and name != entity.name:
            entity.name = name
            changed = True
        if description is not None and description != entity.description:
            entity.description = description
            changed = True
        if attributes is not None and attributes != entity.attributes:
            entity.attributes = dict(attributes)
            changed = True
        if alive is not None and alive != entity.alive:
            entity.alive = alive
            changed = True
        if changed:
            entity.metadata_version += 1
        return entity

    def get(self, entity_id: str) -> Entity:
        entity = self._entities.get(entity_id)
        if entity is None:
            raise UnknownEntity(entity_id)
        return entity

    def maybe_get(self, entity_id: str) -> Entity | None:
        return self._entities.get(entity_id)

    def get_many(self, entity_ids: list[str]) -> list[Entity]:
        return [self.get(eid) for eid in entity_ids]

    def all(self) -> list[Entity]:
        return list(self._entities.values())

    def add_asset(self, entity_id: str, modality: str, descriptor: str) -> AssetRecord:
        self._check_open()
        if modality not in ASSET_MODALITIES:
            raise ValueError(f"unknown modality {modality!r}")
        if not descriptor:
            raise ValueError("asset descriptor must be nonempty")
        entity = self.get(entity_id)
        latest = entity.latest_asset(modality)
        version = (latest.version + 1) if latest else 1
        record = AssetRecord(
            asset_id=f"{entity_id}.{modality}.v{version}",
            modality=modality,
            descriptor=descriptor,
            version=version,
            derived_from_metadata_version=entity.metadata_version,
        )
        entity.assets.append(record)
        return record

    def clone(self) -> "EntityRegistry":
        twin = EntityRegistry(self.session_id)
        twin._entities = {eid: e.clone() for eid, e in self._entities.items()}
        twin._closed = self._closed
        return twin


def seed_entities(registry: EntityRegistry, game: GameDefinition) -> None:
    for seed in game.initial_entities:
        registry.upsert(seed.entity_id, kind=seed.kind, name=seed.name,
                        description=seed.description, attributes=dict(seed.attributes))
