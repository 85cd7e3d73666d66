"""Desk-scale gameplay analytics and a synthetic traffic simulator.

Sessions bucket into interaction-round bins (<5, 5-30, 31-50, >50); the
simulator draws power-law traffic across games (Zipf shape, s=1.1) plus a
dominant outlier game that the summary's threshold parameter can exclude,
mirroring how one runaway title distorts platform-wide statistics.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .persistence import SessionRecord

HISTOGRAM_BINS = ("lt_5", "5_30", "31_50", "gt_50")


@dataclass(frozen=True)
class AnalyticsSummary:
    total_sessions: int
    per_game: dict[str, int]
    histogram: dict[str, int]
    top_games: tuple[tuple[str, int], ...]
    excluded_games: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "total_sessions": self.total_sessions,
            "per_game": dict(self.per_game),
            "histogram": dict(self.histogram),
            "top_games": [list(pair) for pair in self.top_games],
            "excluded_games": list(self.excluded_games),
        }


def bin_for(round_count: int) -> str:
    if round_count < 5:
        return "lt_5"
    if round_count <= 30:
        return "5_30"
    if round_count <= 50:
        return "31_50"
    return "gt_50"


def analytics_summary(records: list[SessionRecord],
                      outlier_threshold: int | None = None,
                      top_k: int = 10) -> AnalyticsSummary:
    """Deterministic aggregation; bins always sum to the included total.

    ``outlier_threshold`` drops any game whose session count exceeds it
    before aggregating, so one runaway game cannot drown the rest.
    """
    counts: dict[str, int] = {}
    for record in records:
        counts[record.game_id] = counts.get(record.game_id, 0) + 1

    excluded = ()
    if outlier_threshold is not None:
        excluded = tuple(sorted(g for g, n in counts.items() if n > outlier_threshold))
        counts = {g: n for g, n in counts.items() if g not in excluded}

    histogram = {name: 0 for name in HISTOGRAM_BINS}
    total = 0
    for record in records:
        if record.game_id in excluded:
            continue
        histogram[bin_for(record.round_count)] += 1
        total += 1

    ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    return AnalyticsSummary(
        total_sessions=total,
        per_game=dict(sorted(counts.items())),
        histogram=histogram,
        top_games=tuple(ranked[:top_k]),
        excluded_games=excluded,
    )


def zipf_allocation(total: int, n: int, s: float = 1.1) -> list[int]:
    """Split ``total`` across ``n`` ranks with Zipf weights, exactly.

    Largest-remainder rounding keeps the allocation deterministic and the
    sum exact.
    """
    if n <= 0:
        return []
    weights = [1.0 / (rank ** s) for rank in range(1, n + 1)]
    scale = total / sum(weights)
    shares = [w * scale for w in weights]
    counts = [int(share) for share in shares]
    remainder = total - sum(counts)
    by_fraction = sorted(range(n), key=lambda i: (-(shares[i] - counts[i]), i))
    for i in by_fraction[:remainder]:
        counts[i] += 1
    return counts


# Round-count mixture: early quits, the 5-30 majority, and a long tail.
_BIN_WEIGHTS = (("lt_5", 0.30), ("5_30", 0.55), ("31_50", 0.12), ("gt_50", 0.03))
_BIN_RANGES = {"lt_5": (1, 4), "5_30": (5, 30), "31_50": (31, 50), "gt_50": (51, 120)}


def _draw_round_count(rng: random.Random) -> int:
    roll = rng.random()
    acc = 0.0
    for name, weight in _BIN_WEIGHTS:
        acc += weight
        if roll < acc:
            lo, hi = _BIN_RANGES[name]
            return rng.randint(lo, hi)
    lo, hi = _BIN_RANGES["gt_50"]
    return rng.randint(lo, hi)


@dataclass
class SimulationResult:
    records: list[SessionRecord] = field(default_factory=list)
    game_ids: list[str] = field(default_factory=list)
    outlier_game_id: str | None = None


def simulate_corpus(games: int, sessions: int, seed: int,
                    outlier_sessions: int = 35407) -> SimulationResult:
    """Synthetic session records: ``sessions`` spread over ``games`` by
    Zipf traffic, plus one outlier game with ``outlier_sessions`` (0
    disables it)."""
    rng = random.Random(seed)
    result = SimulationResult()
    base_time = 1_700_000_000.0

    allocation = zipf_allocation(sessions, games)
    serial = 0
    for game_index, count in enumerate(allocation, 1):
        game_id = f"sim-game-{game_index:03d}"
        result.game_ids.append(game_id)
        for _ in range(count):
            serial += 1
            rounds = _draw_round_count(rng)
            result.records.append(SessionRecord(
                session_id=f"sim-{serial:06d}", game_id=game_id,
                created_at=base_time + serial, ended_at=base_time + serial + rounds * 30,
                round_count=rounds))

    if outlier_sessions > 0:
        outlier_id = "sim-outlier"
        result.outlier_game_id = outlier_id
        result.game_ids.append(outlier_id)
        for _ in range(outlier_sessions):
            serial += 1
            rounds = _draw_round_count(rng)
            result.records.append(SessionRecord(
                session_id=f"sim-{serial:06d}", game_id=outlier_id,
                created_at=base_time + serial, ended_at=base_time + serial + rounds * 30,
                round_count=rounds))
    return result
