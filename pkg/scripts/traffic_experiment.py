#!/usr/bin/env python3
"""Desk-scale traffic experiment: simulate power-law gameplay traffic and
summarize it the way the platform analytics do.

Defaults mirror the reference corpus (167 games, 24,894 sessions, one
35,407-session outlier excluded by threshold).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from zagii.analytics import analytics_summary, simulate_corpus


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--games", type=int, default=167)
    parser.add_argument("--sessions", type=int, default=24894)
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--outlier-sessions", type=int, default=35407)
    parser.add_argument("--threshold", type=int, default=30000)
    args = parser.parse_args()

    result = simulate_corpus(args.games, args.sessions, args.seed,
                             outlier_sessions=args.outlier_sessions)
    summary = analytics_summary(result.records, outlier_threshold=args.threshold)

    print(f"games: {args.games} (+1 outlier)   sessions: {len(result.records)}")
    print(f"excluded by threshold {args.threshold}: {summary.excluded_games}")
    print(f"analyzed sessions: {summary.total_sessions}")
    print("\ninteraction-round histogram:")
    for name, count in summary.histogram.items():
        share = count / max(1, summary.total_sessions)
        print(f"  {name:>6}: {count:6d}  {'#' * int(60 * share)}")
    print("\ntop games by sessions:")
    uniform = summary.total_sessions / max(1, args.games)
    for game_id, count in summary.top_games:
        print(f"  {game_id}: {count}  ({count / uniform:.1f}x uniform share)")
    over_100 = sum(1 for n in summary.per_game.values() if n > 100)
    over_500 = sum(1 for n in summary.per_game.values() if n > 500)
    print(f"\ngames over 100 sessions: {over_100}; over 500 sessions: {over_500}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
