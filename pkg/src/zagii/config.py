"""Engine tuning knobs. Defaults are the documented contract values."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class RetrievalWeights:
    relevance: float = 0.5
    recency: float = 0.3
    salience: float = 0.2


@dataclass(frozen=True)
class EngineConfig:
    # roleplay
    responder_cap: int = 2          # NPCs answering per player round
    max_plan_elements: int = 6
    fragment_k: int = 4             # memory fragments fed to Thinking

    # narrative
    beat_window: int = 5            # beats kept in the evolving context
    stall_window: int = 6           # quiet rounds before a stall beat
    material_k: int = 4             # lore chunks per beat prompt
    chunk_words: int = 120
    chunk_stride: int = 60

    # status manager
    sampling_rate: float = 0.1      # shadow-assessment cadence, 0 disables

    # retrieval scoring
    weights: RetrievalWeights = field(default_factory=RetrievalWeights)

    # websocket streaming feel; boundaries carry no contract
    ws_chunk_size: int = 24
    ws_chunk_delay_s: float = 0.0

    # sessions idle longer than this end on next touch; None disables
    idle_timeout_s: float | None = None
