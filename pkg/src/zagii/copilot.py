"""Game building copilot: a staged pipeline from seed text to a validated
game definition.

Five stages run in a fixed order — world, characters, narrative_outline,
mechanics, integration — each a single completion parsed by a line
grammar, consuming only the seed and earlier outputs. Integration
assembles the definition, decomposes every creator goal into typed
subgoals, repairs missing anchor declarations where the type is
inferable, and validates the result. Anything it cannot fix pauses the
job as needs_input with the raw output attached for human repair.
"""

from __future__ import annotations

import json
import logging
import uuid
from dataclasses import dataclass, field

from .errors import DecompositionFailed, InvalidSeed
from .game_schema import (
    GENRES,
    AnchorDecl,
    Chapter,
    Character,
    EntitySeed,
    GameDefinition,
    Goal,
    LoreDoc,
    Predicate,
    Subgoal,
    WorldSetting,
    predicate_ops_for,
    serialize_game,
    validate_game,
    value_matches_type,
)
from .llm_gateway import CompletionRequest, Gateway

log = logging.getLogger(__name__)

STAGES = ("world", "characters", "narrative_outline", "mechanics", "integration")

STAGE_GRAMMARS = {
    "world": (
        "BACKGROUND|<world background>\n"
        "REGION|<name>|<description>      (zero or more)\n"
        "ERA|<era and tone>               (optional)"
    ),
    "characters": (
        "CHARACTER|<id>|<name>|<npc or player>|<persona>|<backstory>|<motivations>|<voice>"
    ),
    "narrative_outline": (
        "CHAPTER|<chapter_id>|<intro text>\n"
        "TWIST|<chapter_id>|<twist text>   (zero or more)\n"
        "TASK|<chapter_id>|<task text>     (zero or more)\n"
        "LORE|<doc_id>|<title>|<comma tags>|<body>  (zero or more)"
    ),
    "mechanics": (
        "ANCHOR|<anchor_id>|<name>|<number,text_enum,location,free_text>|<initial>|<extra>\n"
        "  extra: allowed values comma-separated for text_enum, min..max for number, else blank\n"
        "GOAL|<chapter_id>|<goal_id>|<advance_chapter,inject_task,end_game>|<creator goal text>"
    ),
    "integration": (
        "TITLE|<game title>\n"
        "GENRE|<adventure,role_playing,mystery,simulation,strategy,other>\n"
        "ENTITY|<entity_id>|<npc,scene,item,player>|<name>|<description>  (zero or more)"
    ),
}


@dataclass
class CopilotJob:
    job_id: str
    seed_text: str
    status: str = "running"  # running | needs_input | complete | failed
    stage_outputs: dict[str, str] = field(default_factory=dict)
    failed_stage: str | None = None
    notes: list[str] = field(default_factory=list)
    final: GameDefinition | None = None

    def to_dict(self) -> dict:
        return {
            "job_id": self.job_id,
            "seed_text": self.seed_text,
            "status": self.status,
            "stage_outputs": dict(self.stage_outputs),
            "failed_stage": self.failed_stage,
            "notes": list(self.notes),
            "final": json.loads(serialize_game(self.final)) if self.final else None,
        }


# --- stage prompts and parsers -------------------------------------------------

def _stage_prompt(stage: str, seed: str, outputs: dict[str, str],
                  template: GameDefinition | None) -> str:
    parts = [f"You are the {stage.replace('_', ' ')} agent of a game building copilot.",
             f"Creator seed: {seed}"]
    if template is not None:
        parts.append("Customize this template game:\n"
                     + serialize_game(template).decode("utf-8"))
    for prior in STAGES:
        if prior == stage:
            break
        if prior in outputs:
            parts.append(f"--- {prior} output ---\n{outputs[prior]}")
    parts.append("Respond ONLY with lines in this grammar:\n" + STAGE_GRAMMARS[stage])
    return "\n".join(parts)


def _split(line: str, prefix: str, n: int) -> list[str] | None:
    """Fields after the prefix; the final field swallows extra pipes."""
    parts = line.split("|", n)
    if len(parts) < n + 1:
        return None
    return [p.strip() for p in parts[1:]]


@dataclass
class _WorldDraft:
    background: str = ""
    regions: list[dict[str, str]] = field(default_factory=list)
    era_tone: str = ""


def _parse_world(text: str) -> _WorldDraft | None:
    draft = _WorldDraft()
    for line in text.splitlines():
        line = line.strip()
        if line.startswith("BACKGROUND|"):
            draft.background = line.split("|", 1)[1].strip()
        elif line.startswith("REGION|"):
            fields = _split(line, "REGION", 2)
            if fields:
                draft.regions.append({"name": fields[0], "description": fields[1]})
        elif line.startswith("ERA|"):
            draft.era_tone = line.split("|", 1)[1].strip()
    return draft if draft.background else None


def _parse_characters(text: str) -> list[Character] | None:
    characters = []
    for line in text.splitlines():
        line = line.strip()
        if not line.startswith("CHARACTER|"):
            continue
        fields = _split(line, "CHARACTER", 7)
        if fields is None:
            fields = _split(line, "CHARACTER", 4)
            if fields is None:
                continue
            fields += [""] * (7 - len(fields))
        cid, name, kind, persona, backstory, motivations, voice = fields[:7]
        if kind not in ("npc", "player"):
            continue
        characters.append(Character(character_id=cid, name=name, kind=kind,
                                    persona=persona, backstory=backstory,
                                    motivations=motivations, voice_style=voice))
    if not any(c.kind == "npc" for c in characters):
        return None
    return characters


@dataclass
class _OutlineDraft:
    chapters: list[dict] = field(default_factory=list)
    lore: list[LoreDoc] = field(default_factory=list)


def _parse_outline(text: str) -> _OutlineDraft | None:
    draft = _OutlineDraft()
    by_id: dict[str, dict] = {}
    for line in text.splitlines():
        line = line.strip()
        if line.startswith("CHAPTER|"):
            fields = _split(line, "CHAPTER", 2)
            if fields and fields[0] not in by_id:
                chapter = {"chapter_id": fields[0], "intro": fields[1],
                           "twists": [], "tasks": []}
                by_id[fields[0]] = chapter
                draft.chapters.append(chapter)
        elif line.startswith("TWIST|"):
            fields = _split(line, "TWIST", 2)
            if fields and fields[0] in by_id:
                by_id[fields[0]]["twists"].append(fields[1])
        elif line.startswith("TASK|"):
            fields = _split(line, "TASK", 2)
            if fields and fields[0] in by_id:
                by_id[fields[0]]["tasks"].append(fields[1])
        elif line.startswith("LORE|"):
            fields = _split(line, "LORE", 4)
            if fields and fields[3]:
                draft.lore.append(LoreDoc(
                    doc_id=fields[0], title=fields[1],
                    tags=tuple(t.strip() for t in fields[2].split(",") if t.strip()),
                    body=fields[3]))
    return draft if draft.chapters else None


@dataclass
class _MechanicsDraft:
    anchors: list[AnchorDecl] = field(default_factory=list)
    goals: list[dict] = field(default_factory=list)  # chapter_id, goal_id, on_complete, text


def _parse_anchor_line(line: str) -> AnchorDecl | None:
    fields = _split(line, "ANCHOR", 5)
    if fields is None:
        fields = _split(line, "ANCHOR", 4)
        if fields is None:
            return None
        fields.append("")
    anchor_id, name, value_type, initial_raw, extra = fields[:5]
    if value_type == "number":
        try:
            initial: object = float(initial_raw)
        except ValueError:
            return None
        if float(initial).is_integer():
            initial = int(initial)
        min_value = max_value = None
        if ".." in extra:
            lo, _, hi = extra.partition("..")
            try:
                min_value, max_value = float(lo), float(hi)
            except ValueError:
                min_value = max_value = None
        return AnchorDecl(anchor_id=anchor_id, name=name, value_type="number",
                          initial_value=initial, min_value=min_value, max_value=max_value)
    if value_type == "text_enum":
        allowed = tuple(v.strip() for v in extra.split(",") if v.strip())
        if not allowed:
            return None
        initial = initial_raw if initial_raw in allowed else allowed[0]
        return AnchorDecl(anchor_id=anchor_id, name=name, value_type="text_enum",
                          initial_value=initial, allowed_values=allowed)
    if value_type in ("location", "free_text"):
        return AnchorDecl(anchor_id=anchor_id, name=name, value_type=value_type,
                          initial_value=initial_raw)
    return None


def _parse_mechanics(text: str) -> _MechanicsDraft | None:
    draft = _MechanicsDraft()
    for line in text.splitlines():
        line = line.strip()
        if line.startswith("ANCHOR|"):
            decl = _parse_anchor_line(line)
            if decl is not None:
                draft.anchors.append(decl)
        elif line.startswith("GOAL|"):
            fields = _split(line, "GOAL", 4)
            if fields is None:
                continue
            chapter_id, goal_id, on_complete, creator_text = fields
            if on_complete not in ("advance_chapter", "inject_task", "end_game"):
                on_complete = "advance_chapter"
            draft.goals.append({"chapter_id": chapter_id, "goal_id": goal_id,
                                "on_complete": on_complete, "creator_text": creator_text})
    if draft.anchors and draft.goals:
        return draft
    return None


@dataclass
class _IntegrationDraft:
    title: str = ""
    genre: str = "other"
    entities: list[EntitySeed] = field(default_factory=list)


def _parse_integration(text: str) -> _IntegrationDraft | None:
    draft = _IntegrationDraft()
    for line in text.splitlines():
        line = line.strip()
        if line.startswith("TITLE|"):
            draft.title = line.split("|", 1)[1].strip()
        elif line.startswith("GENRE|"):
            genre = line.split("|", 1)[1].strip()
            if genre in GENRES:
                draft.genre = genre
        elif line.startswith("ENTITY|"):
            fields = _split(line, "ENTITY", 4)
            if fields and fields[1] in ("npc", "scene", "item", "player"):
                draft.entities.append(EntitySeed(
                    entity_id=fields[0], kind=fields[1], name=fields[2],
                    description=fields[3]))
    return draft if draft.title else None


_PARSERS = {
    "world": _parse_world,
    "characters": _parse_characters,
    "narrative_outline": _parse_outline,
    "mechanics": _parse_mechanics,
    "integration": _parse_integration,
}


# --- goal decomposition -----------------------------------------------------------

@dataclass(frozen=True)
class SubgoalRow:
    description: str
    anchor_id: str
    op: str
    operand_raw: str


def parse_subgoal_rows(text: str) -> list[SubgoalRow]:
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if not line.startswith("SUBGOAL|"):
            continue
        body = line.split("|", 1)[1]
        parts = body.rsplit("|", 3)
        if len(parts) != 4:
            log.warning("malformed SUBGOAL row dropped: %r", line)
            continue
        description, anchor_id, op, operand = (p.strip() for p in parts)
        rows.append(SubgoalRow(description, anchor_id, op, operand))
    return rows


def _coerce_operand(row: SubgoalRow, decl: AnchorDecl):
    if decl.value_type == "number":
        try:
            number: object = float(row.operand_raw)
        except ValueError:
            return None
        return int(number) if float(number).is_integer() else number
    if row.op in ("in_set", "not_in_set"):
        members = tuple(m.strip() for m in row.operand_raw.split(",") if m.strip())
        return members or None
    return row.operand_raw


def row_to_subgoal(row: SubgoalRow, decl: AnchorDecl, subgoal_id: str) -> Subgoal | None:
    """Type-check one decomposition row against its anchor declaration."""
    if not row.description:
        return None
    if row.op not in predicate_ops_for(decl.value_type):
        log.warning("row %r: op %r invalid for %s anchor", row.description, row.op,
                    decl.value_type)
        return None
    operand = _coerce_operand(row, decl)
    if operand is None:
        return None
    if decl.value_type == "number" and row.op not in ("in_set", "not_in_set"):
        if not value_matches_type(operand, "number"):
            return None
    return Subgoal(subgoal_id=subgoal_id, description=row.description,
                   anchor_id=decl.anchor_id, predicate=Predicate(op=row.op, operand=operand))


def _decompose_prompt(creator_text: str, anchors: list[AnchorDecl]) -> str:
    return (
        "Decompose this creator-written goal into machine-checkable subgoals.\n"
        f"Goal: {creator_text}\n"
        "Declared anchors:\n"
        + "\n".join(f"- {a.anchor_id} ({a.value_type})" for a in anchors)
        + "\nRespond with one line per subgoal, exactly:\n"
          "SUBGOAL|<description>|<anchor_id>|<gt,ge,lt,le,eq,ne,in_set,not_in_set>|<operand>"
    )


def _request_rows(creator_text: str, anchors: list[AnchorDecl],
                  gateway: Gateway) -> list[SubgoalRow]:
    """One completion, with a single format-reminder reprompt if no rows parse."""
    prompt = _decompose_prompt(creator_text, anchors)
    text = gateway.complete(CompletionRequest(role_tag="copilot_stage", prompt=prompt)).text
    rows = parse_subgoal_rows(text)
    if rows:
        return rows
    text = gateway.complete(CompletionRequest(
        role_tag="copilot_stage",
        prompt=prompt + "\nYour previous reply had no valid SUBGOAL rows. "
                        "Follow the grammar exactly.")).text
    return parse_subgoal_rows(text)


def _validate_rows(rows: list[SubgoalRow], anchors: list[AnchorDecl],
                   id_prefix: str) -> list[Subgoal]:
    by_id = {a.anchor_id: a for a in anchors}
    subgoals = []
    for i, row in enumerate(rows, 1):
        decl = by_id.get(row.anchor_id)
        if decl is None:
            log.warning("row references unknown anchor %r; dropped", row.anchor_id)
            continue
        subgoal = row_to_subgoal(row, decl, f"{id_prefix}-{i}")
        if subgoal is not None:
            subgoals.append(subgoal)
    return subgoals


def decompose_goal(creator_text: str, anchors: list[AnchorDecl], gateway: Gateway,
                   id_prefix: str = "sg") -> list[Subgoal]:
    """Model-decomposed subgoals, rows type-checked against declarations.

    Rows naming unknown anchors or failing type checks are dropped with a
    warning; zero valid rows after one reprompt raises DecompositionFailed.
    """
    subgoals = _validate_rows(_request_rows(creator_text, anchors, gateway),
                              anchors, id_prefix)
    if not subgoals:
        raise DecompositionFailed(f"no valid subgoals for goal {creator_text!r}")
    return subgoals


def infer_anchor_decl(row: SubgoalRow) -> AnchorDecl | None:
    """Repair declaration for a row naming an undeclared anchor.

    Numeric-looking rows become number anchors starting at 0; textual rows
    become location anchors (every set op is legal there). Unresolvable
    rows return None.
    """
    if row.op in ("gt", "ge", "lt", "le"):
        try:
            float(row.operand_raw)
        except ValueError:
            return None
        return AnchorDecl(anchor_id=row.anchor_id, name=row.anchor_id,
                          value_type="number", initial_value=0)
    if row.op in ("eq", "ne", "in_set", "not_in_set"):
        try:
            float(row.operand_raw)
            return AnchorDecl(anchor_id=row.anchor_id, name=row.anchor_id,
                              value_type="number", initial_value=0)
        except ValueError:
            return AnchorDecl(anchor_id=row.anchor_id, name=row.anchor_id,
                              value_type="location", initial_value="")
    return None


# --- the pipeline ------------------------------------------------------------------

def expand_seed(seed_text: str, gateway: Gateway,
                template: GameDefinition | None = None,
                job_id: str | None = None,
                resume_from: CopilotJob | None = None) -> CopilotJob:
    """Run the staged pipeline; see the module docstring for the contract.

    ``resume_from`` continues a needs_input job, reusing (possibly human-
    edited) stage outputs already present instead of regenerating them.
    """
    if not seed_text or not seed_text.strip():
        raise InvalidSeed("seed text must be nonempty")
    job = resume_from or CopilotJob(job_id=job_id or f"job-{uuid.uuid4().hex[:10]}",
                                    seed_text=seed_text)
    job.status = "running"
    job.failed_stage = None

    drafts: dict[str, object] = {}
    for stage in STAGES:
        parser = _PARSERS[stage]
        supplied = stage in job.stage_outputs
        raw = job.stage_outputs.get(stage)
        if raw is None:
            raw = gateway.complete(CompletionRequest(
                role_tag="copilot_stage",
                prompt=_stage_prompt(stage, seed_text, job.stage_outputs, template))).text
        draft = parser(raw)
        if draft is None and not supplied:
            retry_prompt = (_stage_prompt(stage, seed_text, job.stage_outputs, template)
                            + "\nYour previous reply did not match the grammar. "
                              "Respond again, grammar only.")
            raw = gateway.complete(CompletionRequest(role_tag="copilot_stage",
                                                     prompt=retry_prompt)).text
            draft = parser(raw)
        job.stage_outputs[stage] = raw
        if draft is None:
            job.status = "needs_input"
            job.failed_stage = stage
            job.notes.append(f"stage {stage} output did not parse; edit and resume")
            return job
        drafts[stage] = draft

    try:
        definition = _integrate(job, drafts, gateway)
    except DecompositionFailed as exc:
        job.status = "needs_input"
        job.failed_stage = "integration"
        job.notes.append(str(exc))
        return job

    report = validate_game(definition)
    if not report.ok:
        job.status = "needs_input"
        job.failed_stage = "integration"
        job.notes.extend(f"{i.path}: {i.message}" for i in report.errors)
        return job
    job.final = definition
    job.status = "complete"
    return job


def _integrate(job: CopilotJob, drafts: dict[str, object],
               gateway: Gateway) -> GameDefinition:
    """Mechanical assembly: cross-check references, decompose goals,
    repair inferable anchors, seed entities."""
    world: _WorldDraft = drafts["world"]
    characters: list[Character] = drafts["characters"]
    outline: _OutlineDraft = drafts["narrative_outline"]
    mechanics: _MechanicsDraft = drafts["mechanics"]
    integration: _IntegrationDraft = drafts["integration"]

    anchors = list(mechanics.anchors)
    anchor_ids = {a.anchor_id for a in anchors}
    chapter_ids = {c["chapter_id"] for c in outline.chapters}

    goals_by_chapter: dict[str, list[Goal]] = {}
    for g in mechanics.goals:
        chapter_id = g["chapter_id"] if g["chapter_id"] in chapter_ids else outline.chapters[0]["chapter_id"]
        rows = _request_rows(g["creator_text"], anchors, gateway)
        # Declare anchors the decomposition references but mechanics missed.
        for row in rows:
            if row.anchor_id in anchor_ids:
                continue
            inferred = infer_anchor_decl(row)
            if inferred is None:
                raise DecompositionFailed(
                    f"goal {g['goal_id']}: cannot infer anchor {row.anchor_id!r}")
            anchors.append(inferred)
            anchor_ids.add(inferred.anchor_id)
            job.notes.append(f"declared missing anchor {row.anchor_id!r} "
                             f"as {inferred.value_type}")
        subgoals = _validate_rows(rows, anchors, g["goal_id"])
        if not subgoals:
            raise DecompositionFailed(f"goal {g['goal_id']}: no valid subgoals")
        goals_by_chapter.setdefault(chapter_id, []).append(Goal(
            goal_id=g["goal_id"], creator_text=g["creator_text"],
            subgoals=tuple(subgoals), on_complete=g["on_complete"]))

    chapters = []
    for index, chapter in enumerate(outline.chapters):
        goals = goals_by_chapter.get(chapter["chapter_id"], [])
        if not goals:
            # Every chapter needs a goal; give empty ones a reachable default.
            fallback_anchor = anchors[0]
            goals = [Goal(
                goal_id=f"{chapter['chapter_id']}-auto",
                creator_text=f"Progress through {chapter['chapter_id']}",
                subgoals=(Subgoal(
                    subgoal_id=f"{chapter['chapter_id']}-auto-sg1",
                    description=f"Advance the story of {chapter['chapter_id']}",
                    anchor_id=fallback_anchor.anchor_id,
                    predicate=_default_progress_predicate(fallback_anchor)),),
                on_complete="advance_chapter")]
            job.notes.append(f"chapter {chapter['chapter_id']} had no goal; "
                             "added a default progression goal")
        chapters.append(Chapter(
            chapter_id=chapter["chapter_id"], order_index=index,
            intro_text=chapter["intro"], goals=tuple(goals),
            twist_pool=tuple(chapter["twists"]), task_pool=tuple(chapter["tasks"])))

    entities = list(integration.entities)
    entity_ids = {e.entity_id for e in entities}
    for character in characters:
        if character.kind == "npc" and character.character_id not in entity_ids:
            entities.append(EntitySeed(
                entity_id=character.character_id, kind="npc", name=character.name,
                description=character.persona))
            entity_ids.add(character.character_id)

    return GameDefinition(
        game_id=job.job_id.replace("job-", "game-", 1),
        title=integration.title,
        genre=integration.genre,
        world=WorldSetting(background=world.background,
                           regions=tuple(world.regions), era_tone=world.era_tone),
        characters=tuple(characters),
        anchors=tuple(anchors),
        chapters=tuple(chapters),
        lore=tuple(outline.lore),
        initial_entities=tuple(entities),
    )


def _default_progress_predicate(decl: AnchorDecl) -> Predicate:
    """Satisfied once the anchor moves off its initial value."""
    if decl.value_type == "number":
        return Predicate(op="ne", operand=decl.initial_value)
    return Predicate(op="ne", operand=str(decl.initial_value))
