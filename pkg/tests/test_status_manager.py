import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zagii.errors import TypeMismatch
from zagii.game_schema import AnchorDecl, Predicate
from zagii.session_store import initial_state
from zagii.status_manager import (
    DiscrepancyReport,
    apply_round,
    advance,
    check_goals,
    cold_start,
    eval_predicate,
    parse_considerations,
    parse_set_lines,
    resolve_proposals,
    sample_assessment,
    sampling_due,
)

from conftest import StageHarness, make_mini_game, scripted_gateway

NUMBER = AnchorDecl("hp", "HP", "number", 10)
ENUM = AnchorDecl("loc", "Location", "text_enum", "In the Black Forest",
                  allowed_values=("In the Black Forest", "Out of the Black Forest"))
FREE = AnchorDecl("note", "Note", "free_text", "")


# --- eval_predicate ---

def test_health_gt_zero_true():
    assert eval_predicate(10, Predicate("gt", 0), NUMBER) is True


def test_health_zero_strict_boundary():
    assert eval_predicate(0, Predicate("gt", 0), NUMBER) is False


def test_location_eq():
    assert eval_predicate("Out of the Black Forest",
                          Predicate("eq", "Out of the Black Forest"), ENUM) is True
    assert eval_predicate("In the Black Forest",
                          Predicate("eq", "Out of the Black Forest"), ENUM) is False


def test_free_text_normalized_eq():
    assert eval_predicate("  Resonance ", Predicate("eq", "resonance"), FREE) is True
    assert eval_predicate("Resonance", Predicate("ne", "resonance"), FREE) is False


def test_text_enum_eq_is_exact():
    assert eval_predicate("out of the black forest",
                          Predicate("eq", "Out of the Black Forest"), ENUM) is False


def test_in_set_and_not_in_set():
    pred = Predicate("in_set", ("a", "b"))
    assert eval_predicate("a", pred, ENUM_ANY := AnchorDecl("x", "x", "location", "a"))
    assert eval_predicate("c", Predicate("not_in_set", ("a", "b")), ENUM_ANY)


def test_numeric_op_on_text_raises():
    with pytest.raises(TypeMismatch):
        eval_predicate("hello", Predicate("gt", 0))
    with pytest.raises(TypeMismatch):
        eval_predicate(5, Predicate("gt", "zero"))


def test_set_op_on_number_raises():
    with pytest.raises(TypeMismatch):
        eval_predicate(5, Predicate("in_set", ("5",)))


def test_free_text_not_in_set_rejected_with_decl():
    with pytest.raises(TypeMismatch):
        eval_predicate("x", Predicate("not_in_set", ("x",)), FREE)


# --- randomized predicate oracle ---

def _oracle(value, pred, decl):
    """Brute-force comparison, written independently from the engine."""
    op, operand = pred.op, pred.operand
    if decl.value_type == "free_text" and isinstance(value, str):
        value = value.strip().casefold()
        if isinstance(operand, str):
            operand = operand.strip().casefold()
        elif isinstance(operand, tuple):
            operand = tuple(m.strip().casefold() for m in operand)
    table = {"gt": lambda: value > operand, "ge": lambda: value >= operand,
             "lt": lambda: value < operand, "le": lambda: value <= operand,
             "eq": lambda: value == operand, "ne": lambda: value != operand,
             "in_set": lambda: value in operand,
             "not_in_set": lambda: value not in operand}
    return table[op]()


def test_thousand_random_predicates_match_oracle():
    rng = random.Random(42)
    words = ["alpha", "beta", "Gamma", " delta ", "EPSILON", "zeta"]
    for _ in range(1000):
        kind = rng.choice(["number", "text_enum", "location", "free_text"])
        if kind == "number":
            decl = AnchorDecl("a", "a", "number", 0)
            value = rng.choice([rng.randint(-20, 20), rng.uniform(-5, 5)])
            pred = Predicate(rng.choice(["gt", "ge", "lt", "le", "eq", "ne"]),
                             rng.choice([rng.randint(-20, 20), rng.uniform(-5, 5)]))
        else:
            decl = AnchorDecl("a", "a", kind, "x",
                              allowed_values=tuple(words) if kind == "text_enum" else None)
            value = rng.choice(words)
            ops = ["eq", "ne", "in_set"] if kind == "free_text" \
                else ["eq", "ne", "in_set", "not_in_set"]
            op = rng.choice(ops)
            operand = tuple(rng.sample(words, rng.randint(1, 3))) \
                if op in ("in_set", "not_in_set") else rng.choice(words)
            pred = Predicate(op, operand)
        assert eval_predicate(value, pred, decl) == _oracle(value, pred, decl)


@given(value=st.integers(-100, 100) | st.floats(-100, 100, allow_nan=False),
       operand=st.integers(-100, 100) | st.floats(-100, 100, allow_nan=False),
       op=st.sampled_from(["gt", "ge", "lt", "le", "eq", "ne"]))
@settings(max_examples=200, deadline=None)
def test_numeric_predicates_property(value, operand, op):
    decl = AnchorDecl("a", "a", "number", 0)
    pred = Predicate(op, operand)
    assert eval_predicate(value, pred, decl) == _oracle(value, pred, decl)


# --- check_goals over the Table-style decomposition ---

def _black_forest_state(black_forest, adv, pri, loc):
    state = initial_state(black_forest, "t-session")
    values = dict(state.anchor_values)
    values.update({"adventurer_health": adv, "princess_health": pri,
                   "party_location": loc})
    import dataclasses
    return dataclasses.replace(state, anchor_values=values)


def test_check_goals_two_of_three(black_forest):
    state = _black_forest_state(black_forest, 10, 5, "In the Black Forest")
    result = check_goals(state, black_forest)
    goal = result.goals[0]
    satisfied = {c.subgoal_id: c.satisfied for c in goal.subgoals}
    assert satisfied == {"adventurer-safe": True, "princess-safe": True,
                         "party-escaped": False}
    assert goal.achieved is False


def test_check_goals_all_three(black_forest):
    state = _black_forest_state(black_forest, 10, 5, "Out of the Black Forest")
    result = check_goals(state, black_forest)
    assert result.goals[0].achieved is True


def test_goal_achieved_is_and_of_subgoals(black_forest):
    rng = random.Random(9)
    for _ in range(200):
        adv = rng.choice([0, 1, 10])
        pri = rng.choice([0, 1, 5])
        loc = rng.choice(["In the Black Forest", "Out of the Black Forest"])
        result = check_goals(_black_forest_state(black_forest, adv, pri, loc),
                             black_forest)
        goal = result.goals[0]
        assert goal.achieved == all(c.satisfied for c in goal.subgoals)


def test_latched_subgoal_stays_satisfied(mini_game):
    harness = StageHarness(mini_game)
    harness.begin_round("gather")
    harness.stage("state_updated", {"anchor_id": "coins", "old": 0, "new": 3,
                                    "rationale": "", "source": "llm_assessment"})
    assert harness.state.subgoal_status["collect-sg1"] == "achieved"
    harness.begin_round("drop them")
    harness.stage("state_updated", {"anchor_id": "coins", "old": 3, "new": 0,
                                    "rationale": "", "source": "llm_assessment"})
    # anchors dropped below threshold but the latch holds
    assert harness.state.subgoal_status["collect-sg1"] == "achieved"
    assert check_goals(harness.state, mini_game).goal("collect").achieved is True


# --- SET grammar / proposal resolution ---

def test_parse_set_lines():
    text = "noise\nSET|hp|7|dragon attack\nSET|loc|Out of the Black Forest|escaped\nNOCHANGE"
    assert parse_set_lines(text) == [("hp", "7", "dragon attack"),
                                     ("loc", "Out of the Black Forest", "escaped")]


def test_resolve_drops_unknown_anchor(mini_game):
    delta = resolve_proposals(mini_game, {"coins": 0, "door": "closed", "password": ""},
                              [("ghost", "5", "nope")], "llm_assessment")
    assert delta.changes == ()


def test_resolve_drops_disallowed_enum_value(mini_game):
    delta = resolve_proposals(mini_game, {"coins": 0, "door": "closed", "password": ""},
                              [("door", "ajar", "half")], "llm_assessment")
    assert delta.changes == ()


def test_resolve_clamps_to_declared_bounds(mini_game):
    delta = resolve_proposals(mini_game, {"coins": 0, "door": "closed", "password": ""},
                              [("coins", "999", "jackpot")], "llm_assessment")
    assert delta.changes[0].new == 100


def test_resolve_last_proposal_wins(mini_game):
    delta = resolve_proposals(mini_game, {"coins": 0, "door": "closed", "password": ""},
                              [("coins", "2", "a"), ("coins", "5", "b")], "llm_assessment")
    assert len(delta.changes) == 1
    assert delta.changes[0].new == 5


def test_resolve_skips_no_change(mini_game):
    delta = resolve_proposals(mini_game, {"coins": 4, "door": "closed", "password": ""},
                              [("coins", "4", "same")], "llm_assessment")
    assert delta.changes == ()


def test_apply_round_stages_one_event_per_anchor(mini_game):
    harness = StageHarness(mini_game)
    harness.begin_round("the echo pays me three coins")
    gateway = scripted_gateway({"goal_check": ["SET|coins|3|echo payment\nSET|door|open|creaked"]})
    assessment = apply_round(harness, mini_game, gateway, "transcript", [], {})
    updated = [e for e in harness.staged if e.topic == "state_updated"]
    assert {e.payload["anchor_id"] for e in updated} == {"coins", "door"}
    assert harness.state.anchor_values["coins"] == 3
    assert assessment.pre_anchor_values["coins"] == 0


def test_apply_round_prompt_carries_guidance_and_hints(mini_game):
    harness = StageHarness(mini_game)
    harness.begin_round("hello")
    gateway = scripted_gateway({"goal_check": ["NOCHANGE"]})
    from zagii.status_manager import ValidationGuidance
    guidance = {"collect": ValidationGuidance("collect", ("Count the coins carefully.",),
                                              0.0, "sota")}
    assessment = apply_round(harness, mini_game, gateway, "the transcript text",
                             ["coins: +3 (proposed by echo)"], guidance)
    assert "Count the coins carefully." in assessment.prompt
    assert "coins: +3 (proposed by echo)" in assessment.prompt
    assert "the transcript text" in assessment.prompt


# --- advance ---

def _no_beats(trigger, goal):
    return None


def test_advance_chapter_emits_events(mini_game):
    harness = StageHarness(mini_game)
    harness.begin_round("gather")
    harness.stage("state_updated", {"anchor_id": "coins", "old": 0, "new": 3,
                                    "rationale": "", "source": "llm_assessment"})
    gateway = scripted_gateway()
    result = check_goals(harness.state, mini_game)
    completed = advance(harness, mini_game, gateway, result, _no_beats)
    assert completed == ["collect"]
    topics = [e.topic for e in harness.staged]
    assert "goal_achieved" in topics and "chapter_advanced" in topics
    assert harness.state.chapter_cursor == 1
    assert harness.state.goal_status["collect"] == "achieved"


def test_inject_task_emits_beat_without_cursor_move():
    game = make_mini_game(second_goal_on_complete="inject_task")
    harness = StageHarness(game)
    harness.begin_round("whisper")
    harness.stage("state_updated", {"anchor_id": "password", "old": "", "new": "resonance",
                                    "rationale": "", "source": "llm_assessment"})
    from zagii.narrative import NarrativeBeat
    beats = []

    def factory(trigger, goal):
        beat = NarrativeBeat(beat_id="b1", kind="task", text="Seek the silt mounds.",
                             created_turn=1)
        beats.append((trigger, goal.goal_id if goal else None))
        return beat

    gateway = scripted_gateway()
    advance(harness, game, gateway, check_goals(harness.state, game), factory)
    topics = [e.topic for e in harness.staged]
    assert "narrative_injected" in topics
    assert harness.state.chapter_cursor == 0
    assert beats == [("goal_completed", "whisper")]


def test_end_game_emits_session_ended(mini_game):
    harness = StageHarness(mini_game)
    harness.begin_round("open the door")
    harness.stage("chapter_advanced", {"from_index": 0, "to_index": 1, "chapter_id": "open"})
    harness.stage("state_updated", {"anchor_id": "door", "old": "closed", "new": "open",
                                    "rationale": "", "source": "llm_assessment"})
    gateway = scripted_gateway({"summarize": ["A quiet ending."]})
    advance(harness, mini_game, gateway, check_goals(harness.state, mini_game), _no_beats)
    assert harness.state.ended is True
    assert "A quiet ending." in harness.state.ending_summary
    # final anchor snapshot embedded in the summary
    assert "door" in harness.state.ending_summary


def test_two_goals_complete_in_definition_order():
    game = make_mini_game(second_goal_on_complete="inject_task")
    harness = StageHarness(game)
    harness.begin_round("do both at once")
    harness.stage("state_updated", {"anchor_id": "coins", "old": 0, "new": 5,
                                    "rationale": "", "source": "llm_assessment"})
    harness.stage("state_updated", {"anchor_id": "password", "old": "", "new": "resonance",
                                    "rationale": "", "source": "llm_assessment"})
    gateway = scripted_gateway()
    completed = advance(harness, game, gateway, check_goals(harness.state, game), _no_beats)
    assert completed == ["collect", "whisper"]
    achieved = [e.payload["goal_id"] for e in harness.staged if e.topic == "goal_achieved"]
    assert achieved == ["collect", "whisper"]


# --- cold start ---

def test_cold_start_parses_considerations(black_forest):
    gateway = scripted_gateway(sota=[
        "CONSIDER|Watch adventurer_health through the fight.\n"
        "CONSIDER|Watch princess_health during the escape.\n"
        "CONSIDER|party_location must equal Out of the Black Forest."])
    guidance = cold_start(black_forest, gateway)
    g = guidance["rescue-and-escape"]
    assert len(g.considerations) >= 2
    assert any("health" in c for c in g.considerations)
    assert any("location" in c or "Forest" in c for c in g.considerations)
    assert g.degraded is False


def test_cold_start_degrades_without_sota(mini_game):
    gateway = scripted_gateway()
    guidance = cold_start(mini_game, gateway)
    assert all(g.degraded and g.considerations == () for g in guidance.values())


def test_cold_start_rerun_replaces(black_forest):
    gateway = scripted_gateway(sota=["CONSIDER|first pass", "CONSIDER|second pass"])
    first = cold_start(black_forest, gateway)
    second = cold_start(black_forest, gateway)
    assert first["rescue-and-escape"].considerations == ("first pass",)
    assert second["rescue-and-escape"].considerations == ("second pass",)
    assert second["rescue-and-escape"].generated_at >= first["rescue-and-escape"].generated_at


def test_consideration_length_capped():
    text = "CONSIDER|" + "x" * 500
    assert parse_considerations(text) == ("x" * 200,)


# --- sampling cadence and shadow safety ---

def test_sampling_cadence():
    assert [sampling_due(r, 1.0) for r in range(1, 5)] == [True] * 4
    assert [r for r in range(1, 11) if sampling_due(r, 0.5)] == [2, 4, 6, 8, 10]
    assert [r for r in range(1, 21) if sampling_due(r, 0.1)] == [10, 20]
    assert not any(sampling_due(r, 0.0) for r in range(1, 50))


def test_sample_assessment_agreeing(mini_game):
    harness = StageHarness(mini_game)
    harness.begin_round("count coins")
    gateway = scripted_gateway({"goal_check": ["SET|coins|2|found coins"]},
                               sota=["SET|coins|2|found coins"])
    assessment = apply_round(harness, mini_game, gateway, "t", [], {})
    report = sample_assessment(harness.state, mini_game, gateway, assessment,
                               round_index=1, rate=1.0)
    assert isinstance(report, DiscrepancyReport)
    assert report.agree is True
    assert report.light_verdict == report.sota_verdict


def test_sample_assessment_disagreement_is_shadow_only(mini_game):
    harness = StageHarness(mini_game)
    harness.begin_round("count coins")
    gateway = scripted_gateway({"goal_check": ["NOCHANGE"]},
                               sota=["SET|coins|3|sota thinks you got them"])
    assessment = apply_round(harness, mini_game, gateway, "t", [], {})
    before = harness.state.to_canonical()
    report = sample_assessment(harness.state, mini_game, gateway, assessment,
                               round_index=1, rate=1.0)
    assert report.agree is False
    assert report.light_verdict is False and report.sota_verdict is True
    assert harness.state.to_canonical() == before, "shadow pass mutated state"


def test_sample_assessment_skipped_off_cadence(mini_game):
    harness = StageHarness(mini_game)
    harness.begin_round("x")
    gateway = scripted_gateway({"goal_check": ["NOCHANGE"]}, sota=["NOCHANGE"])
    assessment = apply_round(harness, mini_game, gateway, "t", [], {})
    assert sample_assessment(harness.state, mini_game, gateway, assessment,
                             round_index=1, rate=0.5) is None


def test_sample_assessment_noop_without_sota(mini_game):
    harness = StageHarness(mini_game)
    harness.begin_round("x")
    gateway = scripted_gateway({"goal_check": ["NOCHANGE"]})
    assessment = apply_round(harness, mini_game, gateway, "t", [], {})
    assert sample_assessment(harness.state, mini_game, gateway, assessment,
                             round_index=1, rate=1.0) is None
