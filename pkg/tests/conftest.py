"""Shared fixtures: games, scripted gateways, and a staging harness."""

from __future__ import annotations

from pathlib import Path

import pytest

from zagii.config import EngineConfig
from zagii.game_schema import (
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
    load_game,
)
from zagii.llm_gateway import Gateway, ScriptedBackend, ScriptEntry
from zagii.message_bus import BusEvent
from zagii.session_store import MemoryStore, apply_event, initial_state

REPO_ROOT = Path(__file__).resolve().parent.parent
BLACK_FOREST_PATH = REPO_ROOT / "sample_games" / "black_forest.game.json"
DEMO_SCRIPTS = REPO_ROOT / "scripts" / "black_forest_demo"


@pytest.fixture(scope="session")
def black_forest() -> GameDefinition:
    return load_game(BLACK_FOREST_PATH.read_bytes())


def scripted_gateway(by_role: dict[str, list[str]] | None = None,
                     sota: list[str] | None = None,
                     default: list[str] | None = None) -> Gateway:
    """Gateway with ordered scripts: one queue per role plus a default."""
    light = ScriptedBackend("light-test")
    for role, responses in (by_role or {}).items():
        for response in responses:
            light.add(ScriptEntry(match="ordered", response=response, role=role))
    for response in default or []:
        light.add(ScriptEntry(match="ordered", response=response))
    sota_backend = None
    if sota is not None:
        sota_backend = ScriptedBackend("sota-test")
        for response in sota:
            sota_backend.add(ScriptEntry(match="ordered", response=response,
                                         role="goal_check_sota"))
    return Gateway(light=light, sota=sota_backend)


def make_mini_game(second_goal_on_complete: str = "inject_task") -> GameDefinition:
    """Two-chapter game exercising every progression mode."""
    return GameDefinition(
        game_id="mini",
        title="The Vault of Echoes",
        genre="mystery",
        world=WorldSetting(background="A sunken vault where echoes trade in coins."),
        characters=(
            Character(character_id="hero", name="Hero", kind="player"),
            Character(character_id="echo", name="Echo", kind="npc",
                      persona="A talkative resident echo."),
            Character(character_id="warden", name="Warden", kind="npc",
                      persona="The vault's stern keeper."),
        ),
        anchors=(
            AnchorDecl(anchor_id="coins", name="Coins", value_type="number",
                       initial_value=0, min_value=0, max_value=100),
            AnchorDecl(anchor_id="door", name="Vault door", value_type="text_enum",
                       initial_value="closed", allowed_values=("closed", "open")),
            AnchorDecl(anchor_id="password", name="Password", value_type="free_text",
                       initial_value=""),
        ),
        chapters=(
            Chapter(
                chapter_id="gather", order_index=0,
                intro_text="Coins glitter in the silt.",
                goals=(
                    Goal(goal_id="collect", creator_text="Collect three coins.",
                         subgoals=(Subgoal("collect-sg1", "Hold at least 3 coins.",
                                           "coins", Predicate("ge", 3)),),
                         on_complete="advance_chapter"),
                    Goal(goal_id="whisper", creator_text="Learn the vault's password.",
                         subgoals=(Subgoal("whisper-sg1", "Know the password.",
                                           "password", Predicate("eq", "resonance")),),
                         on_complete=second_goal_on_complete),
                ),
                twist_pool=("The silt shifts and a tide of echoes rises.",),
                task_pool=("Sift the silt mounds for coins.", "Ask the Echo for a hint."),
            ),
            Chapter(
                chapter_id="open", order_index=1,
                intro_text="The vault door looms.",
                goals=(
                    Goal(goal_id="open-door", creator_text="Open the vault door.",
                         subgoals=(Subgoal("open-sg1", "The door stands open.",
                                           "door", Predicate("eq", "open")),),
                         on_complete="end_game"),
                ),
                task_pool=("Trace the door's echo grooves.",),
            ),
        ),
        lore=(
            LoreDoc(doc_id="echo-lore", title="On Echoes",
                    body="Echoes hoard sound the way misers hoard coins; speak kindly "
                         "and an echo repays in secrets.",
                    tags=("echo",)),
        ),
        initial_entities=(
            EntitySeed(entity_id="echo", kind="npc", name="Echo",
                       description="A shimmer in the air that repeats kindly."),
            EntitySeed(entity_id="warden", kind="npc", name="Warden",
                       description="A figure of verdigris and patience."),
            EntitySeed(entity_id="vault-door", kind="item", name="Vault Door",
                       description="A door of green bronze, grooved like a record."),
        ),
    )


@pytest.fixture
def mini_game() -> GameDefinition:
    return make_mini_game()


class StageHarness:
    """Minimal round-context stand-in for unit tests: staged events fold
    through the same apply_event the engine uses."""

    def __init__(self, game: GameDefinition, session_id: str = "t-session"):
        self.game = game
        self.state = initial_state(game, session_id)
        self.memory = MemoryStore(session_id)
        self.staged: list[BusEvent] = []

    def stage(self, topic: str, payload: dict) -> BusEvent:
        ts = self.state.turn + 1 if topic == "player_action" else self.state.turn
        event = BusEvent(seq=self.state.last_seq + 1,
                         session_id=self.state.session_id,
                         topic=topic, payload=payload, ts=ts)
        self.state = apply_event(self.state, event, self.game)
        self.staged.append(event)
        return event

    def begin_round(self, utterance: str = "...") -> None:
        self.stage("player_action", {"utterance": utterance, "player_id": "player"})


@pytest.fixture
def config() -> EngineConfig:
    return EngineConfig(sampling_rate=0.0)
