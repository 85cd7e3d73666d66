"""Declarative game definitions: types, document form, and validation.

A game definition is the copilot's output and the engine's input. The
document form is a JSON object ``{"schema_version": 1, "game": {...}}``;
unknown fields anywhere produce warnings, never errors, so older engines
can load newer copilot output. Values are immutable after load.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterator

from .errors import ParseError, ValidationError

SCHEMA_VERSION = 1

GENRES = ("adventure", "role_playing", "mystery", "simulation", "strategy", "other")
VALUE_TYPES = ("number", "text_enum", "location", "free_text")
PREDICATE_OPS = ("gt", "ge", "lt", "le", "eq", "ne", "in_set", "not_in_set")
NUMERIC_OPS = frozenset({"gt", "ge", "lt", "le", "eq", "ne"})
SET_OPS = frozenset({"eq", "ne", "in_set", "not_in_set"})
FREE_TEXT_OPS = frozenset({"eq", "ne", "in_set"})
ON_COMPLETE = ("advance_chapter", "inject_task", "end_game")
CHARACTER_KINDS = ("npc", "player")
ENTITY_KINDS = ("npc", "scene", "item", "player")

AnchorValue = int | float | str


def normalize_text(value: str) -> str:
    """Case-fold and trim; the comparison form for free_text anchors."""
    return value.strip().casefold()


@dataclass(frozen=True)
class WorldSetting:
    background: str
    regions: tuple[dict[str, str], ...] = ()
    era_tone: str = ""


@dataclass(frozen=True)
class Character:
    character_id: str
    name: str
    kind: str  # npc | player
    persona: str = ""
    backstory: str = ""
    motivations: str = ""
    voice_style: str = ""


@dataclass(frozen=True)
class AnchorDecl:
    anchor_id: str
    name: str
    value_type: str  # number | text_enum | location | free_text
    initial_value: AnchorValue
    allowed_values: tuple[str, ...] | None = None
    min_value: float | None = None
    max_value: float | None = None


@dataclass(frozen=True)
class Predicate:
    op: str
    operand: AnchorValue | tuple[str, ...]


@dataclass(frozen=True)
class Subgoal:
    subgoal_id: str
    description: str
    anchor_id: str
    predicate: Predicate


@dataclass(frozen=True)
class Goal:
    goal_id: str
    creator_text: str
    subgoals: tuple[Subgoal, ...]
    on_complete: str = "advance_chapter"


@dataclass(frozen=True)
class Chapter:
    chapter_id: str
    order_index: int
    intro_text: str
    goals: tuple[Goal, ...]
    twist_pool: tuple[str, ...] = ()
    task_pool: tuple[str, ...] = ()


@dataclass(frozen=True)
class LoreDoc:
    doc_id: str
    title: str
    body: str
    tags: tuple[str, ...] = ()


@dataclass(frozen=True)
class EntitySeed:
    entity_id: str
    kind: str  # npc | scene | item | player
    name: str
    description: str
    attributes: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class GameDefinition:
    game_id: str
    title: str
    genre: str
    world: WorldSetting
    characters: tuple[Character, ...]
    anchors: tuple[AnchorDecl, ...]
    chapters: tuple[Chapter, ...]
    lore: tuple[LoreDoc, ...] = ()
    initial_entities: tuple[EntitySeed, ...] = ()

    def anchor(self, anchor_id: str) -> AnchorDecl | None:
        for a in self.anchors:
            if a.anchor_id == anchor_id:
                return a
        return None

    def character(self, character_id: str) -> Character | None:
        for c in self.characters:
            if c.character_id == character_id:
                return c
        return None

    def npcs(self) -> tuple[Character, ...]:
        return tuple(c for c in self.characters if c.kind == "npc")

    def chapter_at(self, order_index: int) -> Chapter | None:
        for ch in self.chapters:
            if ch.order_index == order_index:
                return ch
        return None

    def iter_goals(self) -> Iterator[tuple[Chapter, Goal]]:
        for ch in self.chapters:
            for g in ch.goals:
                yield ch, g


@dataclass(frozen=True)
class ValidationIssue:
    severity: str  # error | warning
    path: str
    message: str


@dataclass
class ValidationReport:
    issues: list[ValidationIssue] = field(default_factory=list)

    @property
    def errors(self) -> list[ValidationIssue]:
        return [i for i in self.issues if i.severity == "error"]

    @property
    def warnings(self) -> list[ValidationIssue]:
        return [i for i in self.issues if i.severity == "warning"]

    @property
    def ok(self) -> bool:
        return not self.errors

    def error(self, path: str, message: str) -> None:
        self.issues.append(ValidationIssue("error", path, message))

    def warning(self, path: str, message: str) -> None:
        self.issues.append(ValidationIssue("warning", path, message))


def value_matches_type(value: AnchorValue, value_type: str) -> bool:
    if value_type == "number":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    return isinstance(value, str)


def predicate_ops_for(value_type: str) -> frozenset[str]:
    if value_type == "number":
        return NUMERIC_OPS
    if value_type == "free_text":
        return FREE_TEXT_OPS
    return SET_OPS


def validate_game(definition: GameDefinition) -> ValidationReport:
    """Check every structural invariant; pure and deterministic.

    An empty error list means the definition can start a session without
    later malformed-definition failures.
    """
    report = ValidationReport()

    if not definition.game_id:
        report.error("game_id", "game_id must be nonempty")
    if definition.genre not in GENRES:
        report.error("genre", f"unknown genre {definition.genre!r}")
    if not definition.world.background.strip():
        report.error("world.background", "world background must be nonempty")

    seen_chars: set[str] = set()
    npc_count = 0
    for i, ch in enumerate(definition.characters):
        path = f"characters[{i}]"
        if ch.character_id in seen_chars:
            report.error(f"{path}.character_id", f"duplicate character_id {ch.character_id!r}")
        seen_chars.add(ch.character_id)
        if ch.kind not in CHARACTER_KINDS:
            report.error(f"{path}.kind", f"unknown kind {ch.kind!r}")
        if ch.kind == "npc":
            npc_count += 1
            if not ch.persona.strip():
                report.error(f"{path}.persona", "npc persona must be nonempty")
    if npc_count == 0:
        report.error("characters", "at least one npc character required")

    anchor_types: dict[str, AnchorDecl] = {}
    for i, decl in enumerate(definition.anchors):
        path = f"anchors[{i}]"
        if decl.anchor_id in anchor_types:
            report.error(f"{path}.anchor_id", f"duplicate anchor_id {decl.anchor_id!r}")
        anchor_types[decl.anchor_id] = decl
        if decl.value_type not in VALUE_TYPES:
            report.error(f"{path}.value_type", f"unknown value_type {decl.value_type!r}")
            continue
        if not value_matches_type(decl.initial_value, decl.value_type):
            report.error(f"{path}.initial_value",
                         f"initial value {decl.initial_value!r} does not conform to {decl.value_type}")
        if decl.value_type == "text_enum":
            if not decl.allowed_values:
                report.error(f"{path}.allowed_values", "text_enum anchors require allowed_values")
            elif decl.initial_value not in decl.allowed_values:
                report.error(f"{path}.initial_value",
                             f"initial value {decl.initial_value!r} not in allowed_values")
        elif decl.allowed_values is not None:
            report.warning(f"{path}.allowed_values",
                           f"allowed_values ignored for value_type {decl.value_type}")

    if not definition.chapters:
        report.error("chapters", "at least one chapter required")
    indices = sorted(ch.order_index for ch in definition.chapters)
    if indices != list(range(len(definition.chapters))):
        report.error("chapters", f"order indices must be 0..n-1 contiguous, got {indices}")

    for ci, ch in enumerate(definition.chapters):
        cpath = f"chapters[{ci}]"
        if not ch.goals:
            report.error(f"{cpath}.goals", "chapter requires at least one goal")
        for gi, goal in enumerate(ch.goals):
            gpath = f"{cpath}.goals[{gi}]"
            if not goal.subgoals:
                report.error(f"{gpath}.subgoals", "goal requires at least one subgoal")
            if goal.on_complete not in ON_COMPLETE:
                report.error(f"{gpath}.on_complete", f"unknown on_complete {goal.on_complete!r}")
            seen_sub: set[str] = set()
            for si, sub in enumerate(goal.subgoals):
                spath = f"{gpath}.subgoals[{si}]"
                if sub.subgoal_id in seen_sub:
                    report.error(f"{spath}.subgoal_id", f"duplicate subgoal_id {sub.subgoal_id!r}")
                seen_sub.add(sub.subgoal_id)
                if not sub.description.strip():
                    report.error(f"{spath}.description", "subgoal description must be nonempty")
                decl = anchor_types.get(sub.anchor_id)
                if decl is None:
                    report.error(f"{spath}.anchor_id",
                                 f"subgoal references undeclared anchor {sub.anchor_id!r}")
                    continue
                _validate_predicate(sub.predicate, decl, spath, report)

    for li, doc in enumerate(definition.lore):
        if not doc.body.strip():
            report.error(f"lore[{li}].body", "lore body must be nonempty")

    seen_entities: set[str] = set()
    for ei, seed in enumerate(definition.initial_entities):
        epath = f"initial_entities[{ei}]"
        if seed.entity_id in seen_entities:
            report.error(f"{epath}.entity_id", f"duplicate entity_id {seed.entity_id!r}")
        seen_entities.add(seed.entity_id)
        if seed.kind not in ENTITY_KINDS:
            report.error(f"{epath}.kind", f"unknown entity kind {seed.kind!r}")

    return report


def _validate_predicate(pred: Predicate, decl: AnchorDecl, path: str, report: ValidationReport) -> None:
    if pred.op not in PREDICATE_OPS:
        report.error(f"{path}.predicate.op", f"unknown op {pred.op!r}")
        return
    allowed = predicate_ops_for(decl.value_type)
    if pred.op not in allowed:
        report.error(f"{path}.predicate.op",
                     f"op {pred.op!r} not allowed on {decl.value_type} anchor {decl.anchor_id!r}")
        return
    if pred.op in ("in_set", "not_in_set"):
        if not isinstance(pred.operand, tuple) or not pred.operand:
            report.error(f"{path}.predicate.operand", "set op requires a nonempty value set")
        elif not all(isinstance(v, str) for v in pred.operand):
            report.error(f"{path}.predicate.operand", "set members must be text")
    elif decl.value_type == "number":
        if not value_matches_type(pred.operand, "number"):
            report.error(f"{path}.predicate.operand",
                         f"numeric op on {decl.anchor_id!r} requires number operand")
    else:
        if not isinstance(pred.operand, str):
            report.error(f"{path}.predicate.operand",
                         f"op {pred.op!r} on {decl.value_type} anchor requires text operand")


# --- document form ---

def load_game(document: bytes | str) -> GameDefinition:
    """Parse and validate the canonical document form.

    Raises ParseError for malformed documents, ValidationError when the
    validation report carries errors. Warnings never block loading.
    """
    definition, report = load_game_with_report(document)
    if not report.ok:
        raise ValidationError(report)
    return definition


def load_game_with_report(document: bytes | str) -> tuple[GameDefinition, ValidationReport]:
    if isinstance(document, bytes):
        try:
            document = document.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"document is not UTF-8: {exc}") from exc
    if not document.strip():
        raise ParseError("empty document")
    try:
        data = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ParseError("document root must be an object")
    if data.get("schema_version") != SCHEMA_VERSION:
        raise ParseError(f"unsupported schema_version {data.get('schema_version')!r}")
    game = data.get("game")
    if not isinstance(game, dict):
        raise ParseError("missing top-level 'game' object")

    warnings: list[ValidationIssue] = []
    for key in data:
        if key not in ("schema_version", "game"):
            warnings.append(ValidationIssue("warning", key, f"unknown top-level field {key!r}"))
    try:
        definition = _game_from_dict(game, warnings)
    except (KeyError, TypeError, AttributeError) as exc:
        raise ParseError(f"malformed game object: {exc!r}") from exc

    report = validate_game(definition)
    report.issues = warnings + report.issues
    return definition, report


def serialize_game(definition: GameDefinition) -> bytes:
    """Document bytes; load(serialize(d)) == d."""
    payload = {"schema_version": SCHEMA_VERSION, "game": _game_to_dict(definition)}
    return (json.dumps(payload, indent=2, ensure_ascii=False, sort_keys=True) + "\n").encode("utf-8")


_KNOWN_GAME_FIELDS = {
    "game_id", "title", "genre", "world", "characters", "anchors",
    "chapters", "lore", "initial_entities",
}


def _warn_unknown(obj: dict, known: set[str], path: str, warnings: list[ValidationIssue]) -> None:
    for key in obj:
        if key not in known:
            warnings.append(ValidationIssue("warning", f"{path}.{key}", f"unknown field {key!r}"))


def _game_from_dict(game: dict[str, Any], warnings: list[ValidationIssue]) -> GameDefinition:
    _warn_unknown(game, _KNOWN_GAME_FIELDS, "game", warnings)
    world = game["world"]
    _warn_unknown(world, {"background", "regions", "era_tone"}, "game.world", warnings)

    characters = []
    for i, c in enumerate(game.get("characters", [])):
        _warn_unknown(c, {"character_id", "name", "kind", "persona", "backstory",
                          "motivations", "voice_style"}, f"game.characters[{i}]", warnings)
        characters.append(Character(
            character_id=c["character_id"], name=c["name"], kind=c["kind"],
            persona=c.get("persona", ""), backstory=c.get("backstory", ""),
            motivations=c.get("motivations", ""), voice_style=c.get("voice_style", ""),
        ))

    anchors = []
    for i, a in enumerate(game.get("anchors", [])):
        _warn_unknown(a, {"anchor_id", "name", "value_type", "initial_value",
                          "allowed_values", "min_value", "max_value"},
                      f"game.anchors[{i}]", warnings)
        allowed = a.get("allowed_values")
        anchors.append(AnchorDecl(
            anchor_id=a["anchor_id"], name=a.get("name", a["anchor_id"]),
            value_type=a["value_type"], initial_value=a["initial_value"],
            allowed_values=tuple(allowed) if allowed is not None else None,
            min_value=a.get("min_value"), max_value=a.get("max_value"),
        ))

    chapters = []
    for i, ch in enumerate(game.get("chapters", [])):
        _warn_unknown(ch, {"chapter_id", "order_index", "intro_text", "goals",
                           "twist_pool", "task_pool"}, f"game.chapters[{i}]", warnings)
        goals = []
        for j, g in enumerate(ch.get("goals", [])):
            _warn_unknown(g, {"goal_id", "creator_text", "subgoals", "on_complete"},
                          f"game.chapters[{i}].goals[{j}]", warnings)
            subgoals = []
            for k, s in enumerate(g.get("subgoals", [])):
                _warn_unknown(s, {"subgoal_id", "description", "anchor_id", "predicate"},
                              f"game.chapters[{i}].goals[{j}].subgoals[{k}]", warnings)
                p = s["predicate"]
                operand = p["operand"]
                if isinstance(operand, list):
                    operand = tuple(operand)
                subgoals.append(Subgoal(
                    subgoal_id=s["subgoal_id"], description=s["description"],
                    anchor_id=s["anchor_id"],
                    predicate=Predicate(op=p["op"], operand=operand),
                ))
            goals.append(Goal(
                goal_id=g["goal_id"], creator_text=g["creator_text"],
                subgoals=tuple(subgoals), on_complete=g.get("on_complete", "advance_chapter"),
            ))
        chapters.append(Chapter(
            chapter_id=ch["chapter_id"], order_index=ch["order_index"],
            intro_text=ch.get("intro_text", ""), goals=tuple(goals),
            twist_pool=tuple(ch.get("twist_pool", [])),
            task_pool=tuple(ch.get("task_pool", [])),
        ))

    lore = tuple(
        LoreDoc(doc_id=d["doc_id"], title=d.get("title", ""),
                body=d["body"], tags=tuple(d.get("tags", [])))
        for d in game.get("lore", [])
    )
    entities = tuple(
        EntitySeed(entity_id=e["entity_id"], kind=e["kind"], name=e["name"],
                   description=e.get("description", ""),
                   attributes=tuple((k, v) for k, v in sorted(e.get("attributes", {}).items())))
        for e in game.get("initial_entities", [])
    )

    return GameDefinition(
        game_id=game["game_id"], title=game.get("title", ""), genre=game.get("genre", "other"),
        world=WorldSetting(
            background=world["background"],
            regions=tuple(dict(r) for r in world.get("regions", [])),
            era_tone=world.get("era_tone", ""),
        ),
        characters=tuple(characters), anchors=tuple(anchors), chapters=tuple(chapters),
        lore=lore, initial_entities=entities,
    )


def _game_to_dict(d: GameDefinition) -> dict[str, Any]:
    return {
        "game_id": d.game_id,
        "title": d.title,
        "genre": d.genre,
        "world": {
            "background": d.world.background,
            "regions": [dict(r) for r in d.world.regions],
            "era_tone": d.world.era_tone,
        },
        "characters": [
            {
                "character_id": c.character_id, "name": c.name, "kind": c.kind,
                "persona": c.persona, "backstory": c.backstory,
                "motivations": c.motivations, "voice_style": c.voice_style,
            }
            for c in d.characters
        ],
        "anchors": [
            {
                "anchor_id": a.anchor_id, "name": a.name, "value_type": a.value_type,
                "initial_value": a.initial_value,
                **({"allowed_values": list(a.allowed_values)} if a.allowed_values is not None else {}),
                **({"min_value": a.min_value} if a.min_value is not None else {}),
                **({"max_value": a.max_value} if a.max_value is not None else {}),
            }
            for a in d.anchors
        ],
        "chapters": [
            {
                "chapter_id": ch.chapter_id, "order_index": ch.order_index,
                "intro_text": ch.intro_text,
                "goals": [
                    {
                        "goal_id": g.goal_id, "creator_text": g.creator_text,
                        "on_complete": g.on_complete,
                        "subgoals": [
                            {
                                "subgoal_id": s.subgoal_id, "description": s.description,
                                "anchor_id": s.anchor_id,
                                "predicate": {
                                    "op": s.predicate.op,
                                    "operand": list(s.predicate.operand)
                                    if isinstance(s.predicate.operand, tuple)
                                    else s.predicate.operand,
                                },
                            }
                            for s in g.subgoals
                        ],
                    }
                    for g in ch.goals
                ],
                "twist_pool": list(ch.twist_pool),
                "task_pool": list(ch.task_pool),
            }
            for ch in d.chapters
        ],
        "lore": [
            {"doc_id": l.doc_id, "title": l.title, "body": l.body, "tags": list(l.tags)}
            for l in d.lore
        ],
        "initial_entities": [
            {
                "entity_id": e.entity_id, "kind": e.kind, "name": e.name,
                "description": e.description, "attributes": dict(e.attributes),
            }
            for e in d.initial_entities
        ],
    }
