"""The NPC agent loop: perceive, remember, think, act.

Perception structures the round's events without a model call; Thinking is
one completion parsed through a line grammar (``DIALOGUE|speaker|text``,
``ACTION|verb|target|anchor:delta``, ``MEMORY|salience|content``) with one
reprompt and a dialogue-only fallback, so a round never dies on parsing.
Action publishes elements in order; anchor effects are only ever proposals
forwarded to the status manager, never direct writes.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass

from .config import EngineConfig
from .errors import InvalidFragment, PreconditionViolation, UnknownCharacter
from .game_schema import Character, GameDefinition
from .llm_gateway import CompletionRequest, Gateway
from .message_bus import BusEvent
from .narrative import NpcPrompt
from .session_store import MemoryFragment

log = logging.getLogger(__name__)

FORMAT_REMINDER = (
    "Respond ONLY with lines in this exact grammar:\n"
    "DIALOGUE|speaker|text\n"
    "ACTION|verb|target|anchor_id:delta   (target and effect optional)\n"
    "MEMORY|salience|content              (salience in [0,1], at most 2)\n"
)


@dataclass(frozen=True)
class AnchorDelta:
    anchor_id: str
    old: object
    new: object


@dataclass(frozen=True)
class Percept:
    session_id: str
    observer: str
    turn: int
    player_utterance: str | None
    observed_events: tuple[str, ...]
    world_delta: tuple[AnchorDelta, ...]
    narrative_context_version: int


@dataclass(frozen=True)
class EffectHint:
    anchor_id: str
    delta: float | None = None
    set_to: str | None = None

    def render(self, proposer: str) -> str:
        if self.delta is not None:
            return f"{self.anchor_id}: {self.delta:+g} (proposed by {proposer})"
        return f"{self.anchor_id}: set to {self.set_to!r} (proposed by {proposer})"


@dataclass(frozen=True)
class DialogueElement:
    speaker: str
    text: str


@dataclass(frozen=True)
class PhysicalElement:
    verb: str
    target: str | None = None
    effect_hint: EffectHint | None = None


@dataclass(frozen=True)
class ActionElement:
    kind: str  # dialogue | physical
    dialogue: DialogueElement | None = None
    physical: PhysicalElement | None = None


@dataclass(frozen=True)
class MemoryWrite:
    content: str
    salience: float


@dataclass(frozen=True)
class ActionPlan:
    actor: str
    elements: tuple[ActionElement, ...]
    memory_writes: tuple[MemoryWrite, ...] = ()
    fallback: bool = False


# --- perception -------------------------------------------------------------

def summarize_event(event: BusEvent) -> str:
    """Fixed one-line rendering per topic."""
    p = event.payload
    topic = event.topic
    if topic == "player_action":
        return f'Player: "{p.get("utterance", "")}"'
    if topic == "npc_action":
        if p.get("kind") == "dialogue":
            d = p.get("dialogue", {})
            return f'{d.get("speaker", p.get("actor"))} said: "{d.get("text", "")}"'
        ph = p.get("physical", {})
        target = f' -> {ph["target"]}' if ph.get("target") else ""
        return f'{p.get("actor")} did: {ph.get("verb", "")}{target}'
    if topic == "state_updated":
        return f'{p.get("anchor_id")}: {p.get("old")!r} -> {p.get("new")!r}'
    if topic == "goal_achieved":
        return f'Goal achieved: {p.get("goal_id")}'
    if topic == "chapter_advanced":
        return f'Chapter advanced: {p.get("chapter_id")}'
    if topic == "narrative_injected":
        beat = p.get("beat", {})
        return f'[{beat.get("kind")}] {beat.get("text", "")}'
    if topic == "asset_updated":
        return f'Asset updated: {p.get("entity_id")} ({p.get("modality")})'
    if topic == "session_ended":
        return "The session has ended."
    return topic


def perceive(game: GameDefinition, session_id: str, npc_id: str,
             events: list[BusEvent], turn: int,
             narrative_context_version: int) -> Percept:
    """Structure incoming events deterministically; no model involved."""
    npc = game.character(npc_id)
    if npc is None or npc.kind != "npc":
        raise UnknownCharacter(npc_id)
    if not events:
        raise PreconditionViolation("empty event window")

    utterance = None
    deltas = []
    summaries = []
    for event in events:
        if event.topic == "player_action":
            utterance = event.payload.get("utterance")
        elif event.topic == "state_updated":
            deltas.append(AnchorDelta(event.payload["anchor_id"],
                                      event.payload["old"], event.payload["new"]))
        summaries.append(f"{event.topic}: {summarize_event(event)}")

    return Percept(
        session_id=session_id, observer=npc_id, turn=turn,
        player_utterance=utterance,
        observed_events=tuple(summaries),
        world_delta=tuple(deltas),
        narrative_context_version=narrative_context_version,
    )


def render_percept(percept: Percept) -> str:
    lines = [f"-- Perception (turn {percept.turn}) --"]
    lines.extend(percept.observed_events)
    if percept.world_delta:
        lines.append("World changes: " + "; ".join(
            f"{d.anchor_id} {d.old!r}->{d.new!r}" for d in percept.world_delta))
    return "\n".join(lines)


# --- thinking ---------------------------------------------------------------

def parse_effect_hint(raw: str) -> EffectHint | None:
    raw = raw.strip()
    if not raw:
        return None
    if ":" not in raw:
        return None
    anchor_id, _, rest = raw.partition(":")
    anchor_id = anchor_id.strip()
    rest = rest.strip()
    if not anchor_id or not rest:
        return None
    if rest.startswith("="):
        return EffectHint(anchor_id=anchor_id, set_to=rest[1:].strip())
    try:
        return EffectHint(anchor_id=anchor_id, delta=float(rest))
    except ValueError:
        return EffectHint(anchor_id=anchor_id, set_to=rest)


def parse_plan(actor: str, text: str, max_elements: int) -> ActionPlan | None:
    """Parse the line grammar. None when no action line validates."""
    elements: list[ActionElement] = []
    writes: list[MemoryWrite] = []
    truncated = False
    for line in text.splitlines():
        line = line.strip()
        if line.startswith("DIALOGUE|"):
            parts = line.split("|", 2)
            if len(parts) < 3 or not parts[2].strip():
                continue
            element = ActionElement(kind="dialogue",
                                    dialogue=DialogueElement(parts[1].strip(), parts[2].strip()))
        elif line.startswith("ACTION|"):
            parts = line.split("|", 3)
            if len(parts) < 2 or not parts[1].strip():
                continue
            verb = parts[1].strip()
            target = parts[2].strip() or None if len(parts) > 2 else None
            hint = parse_effect_hint(parts[3]) if len(parts) > 3 else None
            element = ActionElement(kind="physical",
                                    physical=PhysicalElement(verb, target, hint))
        elif line.startswith("MEMORY|"):
            parts = line.split("|", 2)
            if len(parts) < 3:
                continue
            try:
                salience = float(parts[1].strip())
            except ValueError:
                continue
            if parts[2].strip():
                writes.append(MemoryWrite(parts[2].strip(), salience))
            continue
        else:
            continue
        if len(elements) >= max_elements:
            truncated = True
            continue
        elements.append(element)
    if truncated:
        log.warning("plan for %s exceeded %d elements; truncated", actor, max_elements)
    if not elements:
        return None
    return ActionPlan(actor=actor, elements=tuple(elements),
                      memory_writes=tuple(writes[:2]))


def think(percept: Percept, npc: Character, fragments: list[MemoryFragment],
          npc_prompt: NpcPrompt, gateway: Gateway,
          config: EngineConfig | None = None) -> ActionPlan:
    """One thinking-tier completion parsed into an ActionPlan.

    A malformed response earns one reprompt with the format reminder; a
    second failure degrades to a single dialogue element carrying the raw
    text, so parsing can never fail a round. Backend errors propagate.
    """
    config = config or EngineConfig()
    base_prompt = (
        npc_prompt.text
        + "\n\n" + render_percept(percept)
        + "\n\n" + FORMAT_REMINDER
    )
    result = gateway.complete(CompletionRequest(role_tag="thinking", prompt=base_prompt))
    plan = parse_plan(npc.character_id, result.text, config.max_plan_elements)
    if plan is not None:
        return plan

    log.warning("unparseable plan from %s; reprompting", npc.character_id)
    retry_prompt = (
        base_prompt
        + "\n\nYour previous reply did not match the grammar. "
        + FORMAT_REMINDER
    )
    result = gateway.complete(CompletionRequest(role_tag="thinking", prompt=retry_prompt))
    plan = parse_plan(npc.character_id, result.text, config.max_plan_elements)
    if plan is not None:
        return plan

    log.warning("plan parse failed twice for %s; falling back to raw dialogue",
                npc.character_id)
    raw = result.text.strip() or "..."
    return ActionPlan(
        actor=npc.character_id,
        elements=(ActionElement(kind="dialogue",
                                dialogue=DialogueElement(npc.character_id, raw)),),
        memory_writes=(),
        fallback=True,
    )


# --- action ------------------------------------------------------------------

def act(ctx, plan: ActionPlan) -> tuple[list[str], list[str]]:
    """Stage npc_action events in element order and store memory writes.

    Effect hints are not applied; they come back as rendered proposals for
    the status manager (state authority stays in one place). Returns
    (rendered effect hints, physical target entity ids).
    """
    hints: list[str] = []
    targets: list[str] = []
    for element in plan.elements:
        if element.kind == "dialogue":
            ctx.stage("npc_action", {
                "actor": plan.actor, "kind": "dialogue",
                "dialogue": {"speaker": element.dialogue.speaker,
                             "text": element.dialogue.text},
            })
        else:
            physical = element.physical
            payload = {"actor": plan.actor, "kind": "physical",
                       "physical": {"verb": physical.verb, "target": physical.target}}
            if physical.effect_hint is not None:
                payload["physical"]["effect_hint"] = physical.effect_hint.render(plan.actor)
                hints.append(physical.effect_hint.render(plan.actor))
            ctx.stage("npc_action", payload)
            if physical.target:
                targets.append(physical.target)
    for write in plan.memory_writes:
        try:
            ctx.memory.add_fragment(plan.actor, write.content, write.salience,
                                    turn=ctx.state.turn)
        except InvalidFragment as exc:
            log.warning("memory write from %s dropped: %s", plan.actor, exc)
    return hints, targets


# --- scheduling ----------------------------------------------------------------

_WORD_CACHE: dict[str, re.Pattern] = {}


def _name_pattern(name: str) -> re.Pattern:
    pattern = _WORD_CACHE.get(name)
    if pattern is None:
        pattern = re.compile(r"(?<!\w)" + re.escape(name) + r"(?!\w)", re.IGNORECASE)
        _WORD_CACHE[name] = pattern
    return pattern


def find_mention(name: str, text: str) -> int | None:
    """Position of the first whole-word, case-insensitive mention."""
    match = _name_pattern(name).search(text)
    return match.start() if match else None


def npc_turn_order(game: GameDefinition, utterance: str, cap: int = 2,
                   is_present=None) -> list[Character]:
    """Mentioned NPCs first (in mention order), then definition order,
    capped. ``is_present`` filters NPCs out of the current scene."""
    npcs = [c for c in game.npcs() if is_present is None or is_present(c)]
    mentioned = []
    rest = []
    for npc in npcs:
        position = find_mention(npc.name, utterance)
        if position is None:
            rest.append(npc)
        else:
            mentioned.append((position, npc))
    mentioned.sort(key=lambda pair: pair[0])
    ordered = [npc for _, npc in mentioned] + rest
    return ordered[:max(0, cap)]
