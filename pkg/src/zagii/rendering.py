"""Multi-modal rendering adapter: summaries, entity resolution, descriptors.

Emits scene descriptors — a global prompt plus equal-column regional
sub-prompts with reference assets — for an external generation service to
consume. No diffusion or audio model runs here. Assets version forward
when an entity's metadata moved since the asset was derived; entities not
resolved in a round are never touched.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

from .errors import BackendUnavailable, PreconditionViolation, TimeoutExceeded
from .game_schema import GameDefinition
from .llm_gateway import CompletionRequest, Gateway
from .roleplay import find_mention
from .session_store import AssetRecord, Entity, EntityRegistry

log = logging.getLogger(__name__)

THEME_LIMIT = 140
NARRATIVE_LIMIT = 400


@dataclass(frozen=True)
class PlotSummary:
    turn: int
    theme: str
    narrative: str
    mentioned_names: tuple[str, ...]
    degraded: bool = False


@dataclass(frozen=True)
class Region:
    entity_id: str
    x: float
    y: float
    w: float
    h: float
    local_prompt: str
    reference_asset: str | None = None


@dataclass(frozen=True)
class SceneDescriptor:
    turn: int
    global_prompt: str
    regions: tuple[Region, ...]
    modality: str = "image"

    def to_payload(self) -> dict:
        return {
            "turn": self.turn,
            "global_prompt": self.global_prompt,
            "modality": self.modality,
            "regions": [
                {"entity_id": r.entity_id, "region": [r.x, r.y, r.w, r.h],
                 "local_prompt": r.local_prompt, "reference_asset": r.reference_asset}
                for r in self.regions
            ],
        }

    def to_canonical(self) -> str:
        return json.dumps(self.to_payload(), sort_keys=True,
                          separators=(",", ":"), ensure_ascii=False)


@dataclass(frozen=True)
class ResolvedEntity:
    entity_id: str
    depth: str  # mentioned | interacted


def extract_mentions(transcript: str, names: list[tuple[str, str]]) -> list[str]:
    """Canonical names found in the transcript (whole word, any case),
    ordered by first occurrence. ``names`` pairs (canonical_name, owner_id)
    and duplicates collapse to the first owner."""
    hits = []
    seen = set()
    for name, _owner in names:
        if name in seen or not name:
            continue
        position = find_mention(name, transcript)
        if position is not None:
            hits.append((position, name))
            seen.add(name)
    hits.sort(key=lambda pair: (pair[0], pair[1]))
    return [name for _, name in hits]


def summarize_round(game: GameDefinition, registry: EntityRegistry, turn: int,
                    transcript: str, player_utterance: str,
                    gateway: Gateway) -> PlotSummary:
    """First-person plot summary of the round.

    THEME/NARRATIVE come from one summarize-tier completion; mentioned
    names are matched deterministically against entity and character names
    regardless of what the model wrote. A down backend degrades to the raw
    player utterance.
    """
    if not transcript.strip():
        raise PreconditionViolation("empty round transcript")

    names = [(e.name, e.entity_id) for e in registry.all()]
    names += [(c.name, c.character_id) for c in game.characters]
    mentioned = extract_mentions(transcript, names)

    prompt = (
        "Summarize this round of play from the player's first-person view.\n"
        f"Transcript:\n{transcript}\n"
        "Reply with exactly two lines:\nTHEME|<short theme>\nNARRATIVE|<first-person narrative>"
    )
    try:
        result = gateway.complete(CompletionRequest(role_tag="summarize", prompt=prompt))
    except (BackendUnavailable, TimeoutExceeded):
        return PlotSummary(turn=turn, theme="untitled",
                           narrative=(player_utterance or transcript)[:NARRATIVE_LIMIT],
                           mentioned_names=tuple(mentioned), degraded=True)

    theme, narrative = "", ""
    for line in result.text.splitlines():
        line = line.strip()
        if line.startswith("THEME|"):
            theme = line.split("|", 1)[1].strip()
        elif line.startswith("NARRATIVE|"):
            narrative = line.split("|", 1)[1].strip()
    if not theme:
        theme = "untitled"
    if not narrative:
        narrative = (player_utterance or transcript)
    return PlotSummary(turn=turn, theme=theme[:THEME_LIMIT],
                       narrative=narrative[:NARRATIVE_LIMIT],
                       mentioned_names=tuple(mentioned))


def resolve_entities(summary: PlotSummary, registry: EntityRegistry,
                     interaction_targets: list[str]) -> list[ResolvedEntity]:
    """Entities eligible for asset use this round.

    Physical-action targets resolve as interacted; name mentions as
    mentioned. Everything else stays untouched this round.
    """
    depth: dict[str, str] = {}
    mentioned = set(summary.mentioned_names)
    for entity in registry.all():
        if entity.name in mentioned:
            depth[entity.entity_id] = "mentioned"
    for target in interaction_targets:
        if registry.maybe_get(target) is not None:
            depth[target] = "interacted"
    resolved = [ResolvedEntity(eid, d) for eid, d in depth.items()]
    resolved.sort(key=lambda r: (0 if r.depth == "interacted" else 1, r.entity_id))
    return resolved


def _local_prompt(entity: Entity) -> str:
    attributes = "; ".join(f"{k}: {v}" for k, v in sorted(entity.attributes.items()))
    if attributes:
        return f"{entity.name}: {entity.description} ({attributes})"
    return f"{entity.name}: {entity.description}"


def compose_scene(summary: PlotSummary, resolved: list[ResolvedEntity],
                  registry: EntityRegistry, layout_hook=None) -> SceneDescriptor:
    """Equal-column layout over the resolved entities, deterministic.

    ``layout_hook`` lets a model-guided layout pass supply region rects
    behind the same descriptor contract; rects that fail the unit-square
    checks fall back to the default columns. A fresh (non-stale) image
    asset on an entity is always cited as its reference so downstream
    generation stays visually consistent.
    """
    n = len(resolved)
    rects = [( i / n, 0.0, (i + 1) / n - i / n, 1.0) for i in range(n)]
    if layout_hook is not None and n:
        proposed = layout_hook(summary, [r.entity_id for r in resolved])
        if _valid_layout(proposed, n):
            rects = [tuple(rect) for rect in proposed]
        else:
            log.warning("layout hook returned invalid rects; using columns")
    regions = []
    for i, r in enumerate(resolved):
        entity = registry.get(r.entity_id)
        reference = None
        latest = entity.latest_asset("image")
        if latest is not None and not entity.asset_stale("image"):
            reference = latest.asset_id
        x, y, w, h = rects[i]
        regions.append(Region(
            entity_id=r.entity_id, x=x, y=y, w=w, h=h,
            local_prompt=_local_prompt(entity),
            reference_asset=reference,
        ))
    return SceneDescriptor(
        turn=summary.turn,
        global_prompt=f"{summary.theme}. {summary.narrative}",
        regions=tuple(regions),
    )


def _valid_layout(proposed, n: int) -> bool:
    if not isinstance(proposed, (list, tuple)) or len(proposed) != n:
        return False
    seen = set()
    for rect in proposed:
        if len(rect) != 4:
            return False
        x, y, w, h = rect
        if not (0 <= x and 0 <= y and w > 0 and h > 0
                and x + w <= 1.0 and y + h <= 1.0):
            return False
        if tuple(rect) in seen:
            return False
        seen.add(tuple(rect))
    return True


def update_assets(resolved: list[ResolvedEntity], descriptor: SceneDescriptor,
                  registry: EntityRegistry) -> list[tuple[str, AssetRecord]]:
    """Create v1 assets for bare entities, next versions for stale ones.

    Fresh assets are left alone; unresolved entities are never touched.
    Returns (entity_id, new record) pairs in resolution order.
    """
    by_entity = {r.entity_id: r for r in descriptor.regions}
    created = []
    for r in resolved:
        entity = registry.get(r.entity_id)
        latest = entity.latest_asset("image")
        if latest is not None and not entity.asset_stale("image"):
            continue
        region = by_entity.get(r.entity_id)
        fragment = region.local_prompt if region is not None else _local_prompt(entity)
        record = registry.add_asset(r.entity_id, "image", fragment)
        created.append((r.entity_id, record))
    return created


def audio_descriptor(entity: Entity, mood: str) -> str:
    """Sound/music descriptors reuse the same asset machinery with a
    modality-specific template; only image composition gets regions."""
    return f"{mood} ambience for {entity.name}: {entity.description}"
