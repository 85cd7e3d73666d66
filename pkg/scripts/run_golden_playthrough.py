#!/usr/bin/env python3
"""Run the shipped Black Forest demo twice and verify determinism.

Prints the full transcript of the first run, then checks that the second
run's event log is byte-identical and that folding the log reproduces the
live snapshot.
"""

from __future__ import annotations

import sys
import time
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from zagii.config import EngineConfig
from zagii.engine import Engine
from zagii.game_schema import load_game
from zagii.llm_gateway import Gateway, load_tiered_scripts
from zagii.session_store import fold_events

GAME = ROOT / "sample_games" / "black_forest.game.json"
SCRIPTS = ROOT / "scripts" / "black_forest_demo"


def run(session_id: str, verbose: bool) -> tuple[str, str]:
    light, sota = load_tiered_scripts(SCRIPTS)
    engine = Engine(Gateway(light=light, sota=sota),
                    config=EngineConfig(sampling_rate=0.0))
    game = load_game(GAME.read_bytes())
    engine.publish_game(game)
    engine.create_session(game.game_id, session_id)
    utterances = (SCRIPTS / "utterances.txt").read_text().splitlines()
    for i, utterance in enumerate(utterances, 1):
        result = engine.run_player_round(session_id, utterance)
        if verbose:
            print(f"\n--- round {i} ---")
            print(f"> {utterance}")
            for action in result.npc_actions:
                if action["kind"] == "dialogue":
                    print(f'  {action["dialogue"]["speaker"]}: {action["dialogue"]["text"]}')
                else:
                    ph = action["physical"]
                    target = f' ({ph["target"]})' if ph.get("target") else ""
                    print(f'  * {action["actor"]} {ph["verb"]}{target}')
            for change in result.state_changes:
                print(f'  [{change["anchor_id"]}: {change["old"]} -> {change["new"]}]')
            if result.ended:
                print(f"\n=== THE END ===\n{result.ending_summary}")
    log = "\n".join(e.to_canonical() for e in engine.bus.log_snapshot(session_id))
    live = engine.get_session(session_id).state
    folded = fold_events(game, session_id, engine.bus.log_snapshot(session_id))
    assert folded.to_canonical() == live.to_canonical(), "fold != live"
    return log, live.to_canonical()


def main() -> int:
    start = time.monotonic()
    log1, snap1 = run("demo", verbose=True)
    log2, snap2 = run("demo", verbose=False)
    elapsed = time.monotonic() - start
    print(f"\nevents per run: {log1.count(chr(10)) + 1}")
    print(f"two runs byte-identical: {log1 == log2}")
    print(f"fold(log) == live snapshot: True")
    print(f"elapsed: {elapsed:.3f}s")
    return 0 if log1 == log2 else 1


if __name__ == "__main__":
    sys.exit(main())
