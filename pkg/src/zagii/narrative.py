"""Emergent narrative: beat generation, lore retrieval, NPC prompt assembly.

Beats (tasks, clues, twists, intros, endings) are generated against the
chapter's pools plus retrieved lore and appended to a per-session context
window. NPC prompts are assembled from three sections — static persona,
task-related details, evolving context — joined by a fixed sentinel line;
the static section never changes within a session.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field

from .config import EngineConfig
from .errors import BackendUnavailable, TimeoutExceeded, UnconfiguredTier
from .game_schema import Chapter, Character, GameDefinition, Goal
from .keywords import keyword_set, overlap_relevance
from .llm_gateway import CompletionRequest, Gateway
from .session_store import MemoryFragment, SessionState
from .status_manager import render_anchor_table

log = logging.getLogger(__name__)

BEAT_KINDS = ("task", "clue", "twist", "chapter_intro", "ending")

# The sentinel line separating prompt sections. Bit-exact contract:
# every assembled prompt is static ++ DELIM ++ task ++ DELIM ++ context.
SECTION_DELIMITER = "\n----8<---- SECTION ----8<----\n"

_PROMPT_GRAMMAR = re.compile(
    r"\A(?P<static>.*?)" + re.escape(SECTION_DELIMITER)
    + r"(?P<task>.*?)" + re.escape(SECTION_DELIMITER)
    + r"(?P<context>.*)\Z",
    re.DOTALL,
)


@dataclass(frozen=True)
class NarrativeBeat:
    beat_id: str
    kind: str
    text: str
    targets: tuple[str, ...] = ()
    created_turn: int = 0
    source_goal: str | None = None

    def to_payload(self) -> dict:
        return {"beat_id": self.beat_id, "kind": self.kind, "text": self.text,
                "targets": list(self.targets), "created_turn": self.created_turn,
                "source_goal": self.source_goal}

    @staticmethod
    def from_payload(payload: dict) -> "NarrativeBeat":
        return NarrativeBeat(
            beat_id=payload["beat_id"], kind=payload["kind"], text=payload["text"],
            targets=tuple(payload.get("targets", ())),
            created_turn=payload.get("created_turn", 0),
            source_goal=payload.get("source_goal"),
        )


@dataclass(frozen=True)
class RetrievedMaterial:
    doc_id: str
    snippet: str
    score: float


@dataclass(frozen=True)
class NpcPrompt:
    character_id: str
    static_section: str
    task_section: str
    context_section: str
    narrative_context_version: int

    @property
    def text(self) -> str:
        return (self.static_section + SECTION_DELIMITER
                + self.task_section + SECTION_DELIMITER + self.context_section)


def prompt_matches_grammar(text: str) -> bool:
    return _PROMPT_GRAMMAR.match(text) is not None


# --- lore retrieval -----------------------------------------------------------

def chunk_body(body: str, chunk_words: int = 120, stride: int = 60) -> list[str]:
    """Overlapping windows of at most chunk_words words, sliced from the
    original text so every chunk is a verbatim substring of the body."""
    spans = [m.span() for m in re.finditer(r"\S+", body)]
    if not spans:
        return []
    chunks = []
    for start_word in range(0, len(spans), stride):
        end_word = min(start_word + chunk_words, len(spans))
        chunks.append(body[spans[start_word][0]:spans[end_word - 1][1]])
        if end_word == len(spans):
            break
    return chunks


def retrieve_materials(game: GameDefinition, query: str, k: int,
                       config: EngineConfig | None = None) -> list[RetrievedMaterial]:
    """Top-k lore chunks by keyword overlap; ties go to doc order then
    chunk index. Empty corpus yields an empty list."""
    if k < 1:
        raise ValueError("k must be >= 1")
    config = config or EngineConfig()
    query_keywords = keyword_set(query)
    scored: list[tuple[float, int, int, RetrievedMaterial]] = []
    for doc_index, doc in enumerate(game.lore):
        for chunk_index, chunk in enumerate(
                chunk_body(doc.body, config.chunk_words, config.chunk_stride)):
            score = overlap_relevance(query_keywords, keyword_set(chunk))
            scored.append((score, doc_index, chunk_index,
                           RetrievedMaterial(doc.doc_id, chunk, score)))
    scored.sort(key=lambda item: (-item[0], item[1], item[2]))
    return [material for _, _, _, material in scored[:k]]


# --- per-session narrative context ---------------------------------------------

@dataclass
class NarrativeContext:
    """Beats injected so far plus per-NPC prompt version tracking."""
    session_id: str
    beats: list[NarrativeBeat] = field(default_factory=list)
    beat_counter: int = 0
    fallback_cursor: int = 0
    _npc_versions: dict[str, tuple[int, str, str]] = field(default_factory=dict)

    def next_beat_id(self) -> str:
        self.beat_counter += 1
        return f"b{self.beat_counter:04d}"

    def add_beat(self, beat: NarrativeBeat) -> None:
        self.beats.append(beat)

    def recent_beats(self, window: int) -> list[NarrativeBeat]:
        return self.beats[-window:] if window > 0 else []

    def version_for(self, character_id: str, task_section: str,
                    context_section: str) -> int:
        """Increment iff the task/context bytes changed since last assembly."""
        prev = self._npc_versions.get(character_id)
        if prev is not None and prev[1] == task_section and prev[2] == context_section:
            return prev[0]
        version = (prev[0] + 1) if prev is not None else 1
        self._npc_versions[character_id] = (version, task_section, context_section)
        return version

    def current_version(self, character_id: str) -> int:
        prev = self._npc_versions.get(character_id)
        return prev[0] if prev is not None else 0

    def clone(self) -> "NarrativeContext":
        twin = NarrativeContext(self.session_id)
        twin.beats = list(self.beats)
        twin.beat_counter = self.beat_counter
        twin.fallback_cursor = self.fallback_cursor
        twin._npc_versions = dict(self._npc_versions)
        return twin


# --- beat generation -------------------------------------------------------------

def parse_beat_line(text: str) -> tuple[str, tuple[str, ...], str] | None:
    for line in text.splitlines():
        line = line.strip()
        if not line.startswith("BEAT|"):
            continue
        parts = line.split("|", 3)
        if len(parts) < 4:
            continue
        kind = parts[1].strip()
        targets = tuple(t.strip() for t in parts[2].split(",") if t.strip())
        body = parts[3].strip()
        if kind in BEAT_KINDS and body:
            return kind, targets, body
    return None


def generate_beat(ctx: NarrativeContext, state: SessionState, game: GameDefinition,
                  incomplete_goals: list[Goal], trigger: str, gateway: Gateway,
                  transcript_summary: str = "",
                  config: EngineConfig | None = None) -> NarrativeBeat:
    """One narrative-tier completion shaped by pools, lore, and game state.

    chapter_start passes the chapter intro through without a model call.
    A down backend falls back to the chapter task pool, round-robin.
    """
    config = config or EngineConfig()
    chapter = game.chapter_at(state.chapter_cursor)
    if trigger == "chapter_start":
        beat = NarrativeBeat(
            beat_id=ctx.next_beat_id(), kind="chapter_intro",
            text=chapter.intro_text if chapter else "",
            created_turn=state.turn,
        )
        ctx.add_beat(beat)
        return beat

    goal_text = "; ".join(g.creator_text for g in incomplete_goals)
    materials = retrieve_materials(game, goal_text or game.world.background,
                                   config.material_k, config) if game.lore else []
    prompt_parts = [
        f"You are the narrative designer for '{game.title}'.",
        f"Trigger: {trigger}",
        f"Chapter: {chapter.chapter_id if chapter else '?'}",
    ]
    if chapter and chapter.twist_pool:
        prompt_parts.append("Twist pool:\n" + "\n".join(f"- {t}" for t in chapter.twist_pool))
    if chapter and chapter.task_pool:
        prompt_parts.append("Task pool:\n" + "\n".join(f"- {t}" for t in chapter.task_pool))
    if materials:
        prompt_parts.append("Retrieved lore:\n" + "\n".join(
            f"[{m.doc_id}] {m.snippet}" for m in materials))
    prompt_parts.append("Incomplete goals: " + (goal_text or "none"))
    prompt_parts.append("Current anchors:\n" + render_anchor_table(game, state.anchor_values))
    if transcript_summary:
        prompt_parts.append("Recent events: " + transcript_summary)
    prompt_parts.append(
        "Emit exactly one line: BEAT|kind|comma-separated-targets|text "
        "where kind is task, clue, or twist. Targets may be empty."
    )
    try:
        result = gateway.complete(CompletionRequest(role_tag="narrative",
                                                    prompt="\n".join(prompt_parts)))
    except (BackendUnavailable, TimeoutExceeded, UnconfiguredTier):
        return _fallback_beat(ctx, state, chapter, trigger)

    parsed = parse_beat_line(result.text)
    if parsed is None:
        # Unparseable output still carries story content: keep the raw text,
        # infer the kind from the trigger.
        kind = "twist" if trigger == "stall" else "task"
        parsed = (kind, (), result.text.strip() or "(silence)")
    kind, targets, body = parsed
    known = {c.character_id for c in game.characters}
    beat = NarrativeBeat(
        beat_id=ctx.next_beat_id(), kind=kind, text=body,
        targets=tuple(t for t in targets if t in known),
        created_turn=state.turn,
        source_goal=incomplete_goals[0].goal_id if trigger == "goal_completed" and incomplete_goals else None,
    )
    ctx.add_beat(beat)
    return beat


def _fallback_beat(ctx: NarrativeContext, state: SessionState,
                   chapter: Chapter | None, trigger: str) -> NarrativeBeat:
    pool = chapter.task_pool if chapter and chapter.task_pool else ("Press on.",)
    text = pool[ctx.fallback_cursor % len(pool)]
    ctx.fallback_cursor += 1
    beat = NarrativeBeat(beat_id=ctx.next_beat_id(), kind="task", text=text,
                         created_turn=state.turn)
    ctx.add_beat(beat)
    return beat


# --- NPC prompt assembly -----------------------------------------------------------

def assemble_npc_prompt(game: GameDefinition, npc: Character, state: SessionState,
                        ctx: NarrativeContext, fragments: list[MemoryFragment],
                        config: EngineConfig | None = None) -> NpcPrompt:
    """Three-section role prompt; static bytes never vary within a session.

    The context version increments exactly when task or context bytes
    change, so downstream percepts can cheaply detect storyline movement.
    """
    config = config or EngineConfig()
    static_section = (
        f"You are {npc.name}, a character in '{game.title}'.\n"
        f"Persona: {npc.persona}\n"
        f"Backstory: {npc.backstory}\n"
        f"Motivations: {npc.motivations}\n"
        f"Voice: {npc.voice_style}\n"
        f"World: {game.world.background}"
    )

    chapter = game.chapter_at(state.chapter_cursor)
    task_lines = []
    for beat in ctx.beats:
        if beat.kind in ("task", "clue") and (not beat.targets or npc.character_id in beat.targets):
            task_lines.append(f"Task: {beat.text}")
    if chapter is not None:
        for goal in chapter.goals:
            if state.goal_status.get(goal.goal_id) != "achieved":
                task_lines.append(f"Open objective: {goal.creator_text}")
    task_section = "\n".join(task_lines) if task_lines else "No active tasks."

    context_lines = []
    for beat in ctx.recent_beats(config.beat_window):
        context_lines.append(f"[{beat.kind}] {beat.text}")
    for fragment in fragments:
        context_lines.append(f"(memory) {fragment.content}")
    context_lines.append("State:\n" + render_anchor_table(game, state.anchor_values))
    context_section = "\n".join(context_lines)

    version = ctx.version_for(npc.character_id, task_section, context_section)
    return NpcPrompt(
        character_id=npc.character_id,
        static_section=static_section,
        task_section=task_section,
        context_section=context_section,
        narrative_context_version=version,
    )


# --- stall detection -----------------------------------------------------------------

def detect_stall(state: SessionState, window: int = 6) -> bool:
    """True iff no anchor changed and no subgoal latched in the last
    `window` player rounds."""
    if window < 1:
        raise ValueError("window must be >= 1")
    return (state.turn - state.last_progress_turn) >= window
