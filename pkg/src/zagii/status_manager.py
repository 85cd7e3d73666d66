"""Anchor tracking, goal evaluation, progression, and two-tier assessment.

Goal verdicts are deterministic predicate evaluations over anchors; the
model's only job is mapping a round transcript onto anchor deltas via the
``SET|anchor|value|rationale`` line grammar. A stronger model writes
per-goal validation guidance before play (cold start) and periodically
shadow-checks the lightweight assessments during play, never touching
state.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass

from .errors import (
    BackendUnavailable,
    ScriptExhausted,
    TimeoutExceeded,
    TypeMismatch,
    UnconfiguredTier,
)
from .game_schema import (
    AnchorDecl,
    AnchorValue,
    Chapter,
    GameDefinition,
    Goal,
    Predicate,
    normalize_text,
    predicate_ops_for,
    value_matches_type,
)
from .llm_gateway import CompletionRequest, Gateway
from .session_store import SessionState

log = logging.getLogger(__name__)


# --- predicate evaluation ----------------------------------------------------

def eval_predicate(value: AnchorValue, pred: Predicate,
                   decl: AnchorDecl | None = None) -> bool:
    """Pure comparison of one anchor value against a predicate.

    When the anchor declaration is provided, free_text comparisons are
    normalized (case-folded, trimmed) and op/type pairings are enforced.
    """
    op = pred.op
    is_number = isinstance(value, (int, float)) and not isinstance(value, bool)

    if decl is not None and op not in predicate_ops_for(decl.value_type):
        raise TypeMismatch(f"op {op!r} not allowed on {decl.value_type} anchor")
    normalize = decl is not None and decl.value_type == "free_text"

    if op in ("gt", "ge", "lt", "le"):
        if not is_number or not value_matches_type(pred.operand, "number"):
            raise TypeMismatch(f"numeric op {op!r} on non-number value/operand")
        if op == "gt":
            return value > pred.operand
        if op == "ge":
            return value >= pred.operand
        if op == "lt":
            return value < pred.operand
        return value <= pred.operand

    if op in ("eq", "ne"):
        if is_number:
            if not value_matches_type(pred.operand, "number"):
                raise TypeMismatch("eq/ne on number needs a number operand")
            result = value == pred.operand
        else:
            if not isinstance(pred.operand, str):
                raise TypeMismatch("eq/ne on text needs a text operand")
            left, right = (value, pred.operand)
            if normalize:
                left, right = normalize_text(left), normalize_text(right)
            result = left == right
        return result if op == "eq" else not result

    if op in ("in_set", "not_in_set"):
        if is_number or not isinstance(value, str):
            raise TypeMismatch("set ops apply to text anchors only")
        members = pred.operand if isinstance(pred.operand, (tuple, list, set, frozenset)) else (pred.operand,)
        if not all(isinstance(m, str) for m in members):
            raise TypeMismatch("set members must be text")
        if normalize:
            contained = normalize_text(value) in {normalize_text(m) for m in members}
        else:
            contained = value in set(members)
        return contained if op == "in_set" else not contained

    raise TypeMismatch(f"unknown predicate op {op!r}")


# --- goal checking ------------------------------------------------------------

@dataclass(frozen=True)
class SubgoalCheck:
    subgoal_id: str
    satisfied: bool
    anchor_value_seen: AnchorValue


@dataclass(frozen=True)
class GoalCheck:
    goal_id: str
    achieved: bool
    subgoals: tuple[SubgoalCheck, ...]


@dataclass(frozen=True)
class GoalCheckResult:
    goals: tuple[GoalCheck, ...]

    def goal(self, goal_id: str) -> GoalCheck | None:
        for g in self.goals:
            if g.goal_id == goal_id:
                return g
        return None


def check_goals(state: SessionState, game: GameDefinition) -> GoalCheckResult:
    """Evaluate the current chapter's goals. Latched subgoals stay satisfied."""
    chapter = game.chapter_at(state.chapter_cursor)
    if chapter is None:
        return GoalCheckResult(goals=())
    checks = []
    for goal in chapter.goals:
        sub_checks = []
        for sub in goal.subgoals:
            value = state.anchor_values.get(sub.anchor_id)
            latched = state.subgoal_status.get(sub.subgoal_id) == "achieved"
            satisfied = latched or eval_predicate(value, sub.predicate,
                                                  game.anchor(sub.anchor_id))
            sub_checks.append(SubgoalCheck(sub.subgoal_id, satisfied, value))
        checks.append(GoalCheck(goal.goal_id, all(c.satisfied for c in sub_checks),
                                tuple(sub_checks)))
    return GoalCheckResult(goals=tuple(checks))


# --- transcript -> anchor deltas ----------------------------------------------

@dataclass(frozen=True)
class AnchorChange:
    anchor_id: str
    old: AnchorValue
    new: AnchorValue
    rationale: str


@dataclass(frozen=True)
class StateDelta:
    changes: tuple[AnchorChange, ...]
    source: str  # npc_effect_hint | llm_assessment | system


@dataclass(frozen=True)
class ValidationGuidance:
    goal_id: str
    considerations: tuple[str, ...]
    generated_at: float
    model_backend_id: str
    degraded: bool = False


@dataclass(frozen=True)
class DiscrepancyReport:
    turn: int
    goal_id: str
    light_verdict: bool
    sota_verdict: bool
    agree: bool
    notes: str

    def to_record(self) -> dict:
        return {"turn": self.turn, "goal_id": self.goal_id,
                "light_verdict": self.light_verdict, "sota_verdict": self.sota_verdict,
                "agree": self.agree, "notes": self.notes}


@dataclass
class RoundAssessment:
    """What apply_round saw and decided; the shadow pass replays the prompt."""
    prompt: str
    pre_anchor_values: dict[str, AnchorValue]
    pre_subgoal_status: dict[str, str]
    delta: StateDelta
    raw_response: str = ""


def render_anchor_table(game: GameDefinition, values: dict[str, AnchorValue]) -> str:
    lines = []
    for decl in game.anchors:
        constraint = ""
        if decl.value_type == "text_enum" and decl.allowed_values:
            constraint = " one of [" + ", ".join(decl.allowed_values) + "]"
        elif decl.value_type == "number":
            bounds = []
            if decl.min_value is not None:
                bounds.append(f"min {decl.min_value:g}")
            if decl.max_value is not None:
                bounds.append(f"max {decl.max_value:g}")
            if bounds:
                constraint = " (" + ", ".join(bounds) + ")"
        lines.append(f"- {decl.anchor_id} ({decl.value_type}{constraint}) = {values[decl.anchor_id]!r}")
    return "\n".join(lines)


def build_round_prompt(game: GameDefinition, state: SessionState, transcript: str,
                       effect_hints: list[str],
                       guidance: dict[str, ValidationGuidance]) -> str:
    chapter = game.chapter_at(state.chapter_cursor)
    parts = [
        "You track the hidden state of a role-playing game.",
        "Anchors and current values:",
        render_anchor_table(game, state.anchor_values),
    ]
    if chapter is not None:
        for goal in chapter.goals:
            parts.append(f"Goal {goal.goal_id}: {goal.creator_text}")
            g = guidance.get(goal.goal_id)
            if g and g.considerations:
                parts.append("Validation considerations:")
                parts.extend(f"* {c}" for c in g.considerations)
    if effect_hints:
        parts.append("Proposed effects from NPC actions:")
        parts.extend(f"* {h}" for h in effect_hints)
    parts.append("Round transcript:")
    parts.append(transcript)
    parts.append(
        "Reply with one line per anchor that changed, exactly:\n"
        "SET|anchor_id|new_value|rationale\n"
        "Output NOCHANGE if nothing changed."
    )
    return "\n".join(parts)


def parse_set_lines(text: str) -> list[tuple[str, str, str]]:
    """(anchor_id, raw_value, rationale) triples from SET| lines."""
    proposals = []
    for line in text.splitlines():
        line = line.strip()
        if not line.startswith("SET|"):
            continue
        parts = line.split("|", 3)
        if len(parts) < 3:
            log.warning("malformed SET line dropped: %r", line)
            continue
        anchor_id = parts[1].strip()
        raw_value = parts[2].strip()
        rationale = parts[3].strip() if len(parts) > 3 else ""
        proposals.append((anchor_id, raw_value, rationale))
    return proposals


def coerce_proposal(decl: AnchorDecl, raw_value: str) -> AnchorValue | None:
    """Type-check and clamp one proposed value. None means drop it."""
    if decl.value_type == "number":
        try:
            number: AnchorValue = float(raw_value)
        except ValueError:
            return None
        if float(number).is_integer():
            number = int(number)
        if decl.min_value is not None and number < decl.min_value:
            number = int(decl.min_value) if float(decl.min_value).is_integer() else decl.min_value
        if decl.max_value is not None and number > decl.max_value:
            number = int(decl.max_value) if float(decl.max_value).is_integer() else decl.max_value
        return number
    if decl.value_type == "text_enum":
        if decl.allowed_values and raw_value not in decl.allowed_values:
            return None
        return raw_value
    return raw_value  # location / free_text accept any text


def resolve_proposals(game: GameDefinition, values: dict[str, AnchorValue],
                      proposals: list[tuple[str, str, str]],
                      source: str) -> StateDelta:
    """Validate proposals against declarations; last proposal per anchor wins."""
    accepted: dict[str, AnchorChange] = {}
    for anchor_id, raw_value, rationale in proposals:
        decl = game.anchor(anchor_id)
        if decl is None:
            log.warning("proposal for unknown anchor %r dropped", anchor_id)
            continue
        new = coerce_proposal(decl, raw_value)
        if new is None:
            log.warning("proposal %r=%r failed type check, dropped", anchor_id, raw_value)
            continue
        old = values[anchor_id]
        if new == old:
            continue
        accepted[anchor_id] = AnchorChange(anchor_id, old, new, rationale)
    return StateDelta(changes=tuple(accepted.values()), source=source)


def apply_round(ctx, game: GameDefinition, gateway: Gateway, transcript: str,
                effect_hints: list[str],
                guidance: dict[str, ValidationGuidance]) -> RoundAssessment:
    """Assess one round's impact and stage state_updated events.

    ``ctx`` is the round context (``.state`` plus ``.stage(topic, payload)``);
    every accepted change becomes exactly one event per anchor.
    """
    pre_values = dict(ctx.state.anchor_values)
    pre_status = dict(ctx.state.subgoal_status)
    prompt = build_round_prompt(game, ctx.state, transcript, effect_hints, guidance)
    result = gateway.complete(CompletionRequest(role_tag="goal_check", prompt=prompt))
    delta = resolve_proposals(game, pre_values, parse_set_lines(result.text),
                              source="llm_assessment")
    for change in delta.changes:
        ctx.stage("state_updated", {
            "anchor_id": change.anchor_id, "old": change.old, "new": change.new,
            "rationale": change.rationale, "source": delta.source,
        })
    return RoundAssessment(prompt=prompt, pre_anchor_values=pre_values,
                           pre_subgoal_status=pre_status, delta=delta,
                           raw_response=result.text)


# --- progression ---------------------------------------------------------------

def advance(ctx, game: GameDefinition, gateway: Gateway, result: GoalCheckResult,
            beat_factory) -> list[str]:
    """Publish progression events for newly achieved goals, in definition order.

    ``beat_factory(trigger, goal)`` supplies the injected narrative beat for
    inject_task completions (and the next chapter's intro). Returns the ids
    of goals that completed this round.
    """
    chapter = game.chapter_at(ctx.state.chapter_cursor)
    if chapter is None:
        return []
    completed: list[str] = []
    for goal in chapter.goals:
        if ctx.state.ended:
            break
        verdict = result.goal(goal.goal_id)
        if verdict is None or not verdict.achieved:
            continue
        if ctx.state.goal_status.get(goal.goal_id) == "achieved":
            continue
        completed.append(goal.goal_id)
        ctx.stage("goal_achieved", {
            "goal_id": goal.goal_id,
            "chapter_id": chapter.chapter_id,
            "subgoals": [
                {"subgoal_id": c.subgoal_id, "anchor_value_seen": c.anchor_value_seen}
                for c in verdict.subgoals
            ],
        })
        if goal.on_complete == "advance_chapter":
            _advance_chapter(ctx, game, gateway, chapter, beat_factory)
        elif goal.on_complete == "inject_task":
            beat = beat_factory("goal_completed", goal)
            if beat is not None:
                ctx.stage("narrative_injected", {"beat": beat.to_payload()})
        elif goal.on_complete == "end_game":
            _end_game(ctx, game, gateway, reason="goal")
    return completed


def _advance_chapter(ctx, game: GameDefinition, gateway: Gateway,
                     chapter: Chapter, beat_factory) -> None:
    next_chapter = game.chapter_at(chapter.order_index + 1)
    if next_chapter is None:
        # Advancing past the final chapter concludes the game.
        _end_game(ctx, game, gateway, reason="goal")
        return
    ctx.stage("chapter_advanced", {
        "from_index": chapter.order_index, "to_index": next_chapter.order_index,
        "chapter_id": next_chapter.chapter_id,
    })
    beat = beat_factory("chapter_start", None)
    if beat is not None:
        ctx.stage("narrative_injected", {"beat": beat.to_payload()})


def _end_game(ctx, game: GameDefinition, gateway: Gateway, reason: str) -> None:
    summary = compose_ending_summary(ctx, game, gateway)
    ctx.stage("session_ended", {"reason": reason, "ending_summary": summary})


def compose_ending_summary(ctx, game: GameDefinition, gateway: Gateway) -> str:
    """Model-written epilogue with the final anchor snapshot appended.

    Backend failures propagate: ending a game is a state mutation, so the
    round's atomicity (abort, retry later) beats a degraded summary.
    """
    snapshot = render_anchor_table(game, ctx.state.anchor_values)
    prompt = (
        f"The game '{game.title}' has concluded.\n"
        f"Final state:\n{snapshot}\n"
        "Write a short epilogue summarizing how this playthrough ended."
    )
    text = gateway.complete(CompletionRequest(role_tag="summarize", prompt=prompt)).text.strip()
    return f"{text}\nFinal state:\n{snapshot}"


# --- cold start -----------------------------------------------------------------

def parse_considerations(text: str) -> tuple[str, ...]:
    items = []
    for line in text.splitlines():
        line = line.strip()
        if line.startswith("CONSIDER|"):
            body = line.split("|", 1)[1].strip()
            if body:
                items.append(body[:200])
    return tuple(items[:8])


def cold_start(game: GameDefinition, gateway: Gateway) -> dict[str, ValidationGuidance]:
    """One SOTA pass per goal producing validation considerations.

    An unconfigured or failing SOTA tier degrades to empty, flagged
    guidance; the game still runs.
    """
    guidance: dict[str, ValidationGuidance] = {}
    for chapter, goal in game.iter_goals():
        prompt = (
            f"World: {game.world.background}\n"
            f"Chapter: {chapter.chapter_id}\n"
            f"Goal: {goal.creator_text}\n"
            "Subgoals:\n"
            + "\n".join(
                f"- {s.description} (anchor {s.anchor_id}, {s.predicate.op} "
                f"{s.predicate.operand!r})"
                for s in goal.subgoals
            )
            + "\nAnchors:\n"
            + "\n".join(f"- {a.anchor_id}: {a.name} ({a.value_type})" for a in game.anchors)
            + "\nList 2-8 essential considerations for validating this goal during play,"
              " one per line, exactly: CONSIDER|<consideration>"
        )
        try:
            result = gateway.complete(CompletionRequest(role_tag="goal_check_sota", prompt=prompt))
            considerations = parse_considerations(result.text)
            guidance[goal.goal_id] = ValidationGuidance(
                goal_id=goal.goal_id, considerations=considerations,
                generated_at=time.time(), model_backend_id=result.backend_id,
            )
        except (UnconfiguredTier, BackendUnavailable, TimeoutExceeded) as exc:
            log.warning("cold start degraded for %s: %s", goal.goal_id, exc)
            guidance[goal.goal_id] = ValidationGuidance(
                goal_id=goal.goal_id, considerations=(), generated_at=time.time(),
                model_backend_id="", degraded=True,
            )
    return guidance


# --- real-time shadow assessment --------------------------------------------------

def sampling_due(round_index: int, rate: float) -> bool:
    """Deterministic cadence: every ceil(1/rate)-th round."""
    if rate <= 0.0:
        return False
    period = math.ceil(1.0 / rate)
    return round_index % period == 0


def sample_assessment(state: SessionState, game: GameDefinition, gateway: Gateway,
                      assessment: RoundAssessment, round_index: int,
                      rate: float) -> DiscrepancyReport | None:
    """Shadow-run the round prompt on the SOTA tier and compare goal verdicts.

    Never mutates anything: the SOTA proposals land on a copy of the
    pre-round anchors. Degrades to a no-op when the SOTA tier is missing.
    """
    if not sampling_due(round_index, rate):
        return None
    if not gateway.has_tier("sota"):
        return None
    try:
        result = gateway.complete(CompletionRequest(role_tag="goal_check_sota",
                                                    prompt=assessment.prompt))
    except (UnconfiguredTier, BackendUnavailable, TimeoutExceeded, ScriptExhausted) as exc:
        # Shadow-only: a failed comparison pass must never affect the round.
        log.warning("shadow assessment skipped: %s", exc)
        return None

    sota_delta = resolve_proposals(game, assessment.pre_anchor_values,
                                   parse_set_lines(result.text), source="llm_assessment")
    sota_values = dict(assessment.pre_anchor_values)
    for change in sota_delta.changes:
        sota_values[change.anchor_id] = change.new

    chapter = game.chapter_at(state.chapter_cursor)
    if chapter is None or not chapter.goals:
        return None

    light_result = check_goals(state, game)
    shadow_state = SessionState(
        session_id=state.session_id, game_id=state.game_id,
        chapter_cursor=state.chapter_cursor, anchor_values=sota_values,
        goal_status=dict(state.goal_status),
        subgoal_status=dict(assessment.pre_subgoal_status),
        turn=state.turn,
    )
    sota_result = check_goals(shadow_state, game)

    report_goal = chapter.goals[0].goal_id
    for goal in chapter.goals:
        light = light_result.goal(goal.goal_id)
        sota = sota_result.goal(goal.goal_id)
        if light is not None and sota is not None and light.achieved != sota.achieved:
            report_goal = goal.goal_id
            break
    light_verdict = light_result.goal(report_goal).achieved
    sota_verdict = sota_result.goal(report_goal).achieved
    light_sets = {c.anchor_id: c.new for c in assessment.delta.changes}
    sota_sets = {c.anchor_id: c.new for c in sota_delta.changes}
    return DiscrepancyReport(
        turn=state.turn, goal_id=report_goal,
        light_verdict=light_verdict, sota_verdict=sota_verdict,
        agree=light_verdict == sota_verdict,
        notes=f"light proposed {light_sets!r}; sota proposed {sota_sets!r}",
    )
