"""zagii: an AI-native RPG runtime.

Declarative game definitions run as live single-player, multi-NPC
sessions: NPC agents perceive, remember, think, and act; a status manager
tracks anchors and goals to drive chapter progression; a narrative
subsystem injects emergent story beats; a rendering adapter emits
multi-modal scene descriptors. A building copilot expands one-line seeds
into full definitions.
"""

__version__ = "0.1.0"

from .config import EngineConfig
from .engine import Engine, RoundResult
from .game_schema import GameDefinition, load_game, serialize_game, validate_game
from .llm_gateway import CompletionRequest, Gateway, ScriptedBackend, ScriptEntry
from .message_bus import BusEvent, MessageBus

__all__ = [
    "BusEvent",
    "CompletionRequest",
    "Engine",
    "EngineConfig",
    "GameDefinition",
    "Gateway",
    "MessageBus",
    "RoundResult",
    "ScriptEntry",
    "ScriptedBackend",
    "load_game",
    "serialize_game",
    "validate_game",
    "__version__",
]
