"""Command line entry points: serve, play, simulate, copilot expand."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .analytics import analytics_summary, simulate_corpus
from .config import EngineConfig
from .copilot import expand_seed
from .engine import Engine
from .game_schema import load_game, serialize_game
from .llm_gateway import Gateway, RemoteBackend, gateway_from_config, load_tiered_scripts
from .persistence import FileStorage, MemoryStorage


def build_gateway(backend: str, scripts: str | None,
                  remote_endpoint: str | None = None,
                  remote_model: str | None = None,
                  gateway_config: str | None = None) -> Gateway:
    if gateway_config:
        return gateway_from_config(gateway_config)
    if backend == "scripted":
        if scripts is None:
            raise SystemExit("--scripts directory required for the scripted backend")
        light, sota = load_tiered_scripts(scripts)
        return Gateway(light=light, sota=sota)
    if backend == "remote":
        if not remote_endpoint or not remote_model:
            raise SystemExit("remote backend requires --remote-endpoint and --remote-model")
        remote = RemoteBackend("remote", remote_endpoint, remote_model)
        return Gateway(light=remote, sota=remote)
    raise SystemExit(f"unknown backend {backend!r}")


def cmd_serve(args) -> int:
    import uvicorn

    from .server import create_app

    gateway = build_gateway(args.backend, args.scripts,
                            args.remote_endpoint, args.remote_model,
                            args.gateway_config)
    storage = FileStorage(args.data_dir) if args.data_dir else MemoryStorage()
    engine = Engine(gateway, storage=storage, config=EngineConfig())
    app = create_app(engine, static_dir=args.static_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def cmd_play(args) -> int:
    definition = load_game(Path(args.game_file).read_bytes())
    gateway = build_gateway(args.backend, args.scripts,
                            args.remote_endpoint, args.remote_model,
                            args.gateway_config)
    engine = Engine(gateway)
    engine.publish_game(definition)
    session = engine.create_session(definition.game_id, args.session_id)
    print(f"# {definition.title}")
    chapter = definition.chapter_at(0)
    if chapter is not None:
        print(chapter.intro_text)
    print("(type 'quit' to leave)\n")
    while not session.state.ended:
        try:
            utterance = input("> ").strip()
        except EOFError:
            break
        if not utterance:
            continue
        if utterance.lower() in ("quit", "exit"):
            engine.end_session(session.session_id)
            break
        result = engine.run_player_round(session.session_id, utterance)
        for action in result.npc_actions:
            if action.get("kind") == "dialogue":
                d = action["dialogue"]
                print(f'{d["speaker"]}: {d["text"]}')
            else:
                ph = action["physical"]
                target = f' ({ph["target"]})' if ph.get("target") else ""
                print(f'* {action["actor"]} {ph["verb"]}{target}')
        for change in result.state_changes:
            print(f'  [{change["anchor_id"]}: {change["old"]} -> {change["new"]}]')
        for beat in result.new_beats:
            print(f'  ~ {beat["kind"]}: {beat["text"]}')
        for goal_event in result.goal_events:
            if "goal_id" in goal_event:
                print(f'  ** goal achieved: {goal_event["goal_id"]} **')
        if result.ended:
            print(f"\n=== THE END ===\n{result.ending_summary}")
    return 0


def cmd_simulate(args) -> int:
    import time as _time

    start = _time.monotonic()
    result = simulate_corpus(args.games, args.sessions, args.seed,
                             outlier_sessions=args.outlier_sessions)
    if args.data_dir:
        storage = FileStorage(args.data_dir)
        for record in result.records:
            storage.save_record(record)
    summary = analytics_summary(result.records, outlier_threshold=args.threshold)
    elapsed = _time.monotonic() - start
    payload = summary.to_dict()
    payload["elapsed_s"] = round(elapsed, 3)
    payload["outlier_game"] = result.outlier_game_id
    print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


def cmd_copilot_expand(args) -> int:
    gateway = build_gateway(args.backend, args.scripts,
                            args.remote_endpoint, args.remote_model,
                            args.gateway_config)
    template = None
    if args.template:
        template = load_game(Path(args.template).read_bytes())
    job = expand_seed(args.seed, gateway, template=template)
    out = Path(args.out)
    if job.status == "complete":
        out.write_bytes(serialize_game(job.final))
        print(f"complete: wrote {out}")
        return 0
    out.with_suffix(".job.json").write_text(
        json.dumps(job.to_dict(), indent=2, sort_keys=True) + "\n", "utf-8")
    print(f"{job.status} at stage {job.failed_stage}; "
          f"job saved to {out.with_suffix('.job.json')}", file=sys.stderr)
    return 1


def _add_backend_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--backend", choices=["scripted", "remote"], default="scripted")
    parser.add_argument("--scripts", help="directory of <role>.jsonl script files")
    parser.add_argument("--remote-endpoint")
    parser.add_argument("--remote-model")
    parser.add_argument("--gateway-config",
                        help="JSON config file selecting tier->backend mapping")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="zagii")
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the HTTP/WebSocket server")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--data-dir")
    serve.add_argument("--static-dir", help="serve a built frontend from this directory")
    _add_backend_args(serve)
    serve.set_defaults(func=cmd_serve)

    play = sub.add_parser("play", help="terminal REPL for a game file")
    play.add_argument("game_file")
    play.add_argument("--session-id")
    _add_backend_args(play)
    play.set_defaults(func=cmd_play)

    simulate = sub.add_parser("simulate", help="generate an analytics corpus")
    simulate.add_argument("--games", type=int, required=True)
    simulate.add_argument("--sessions", type=int, required=True)
    simulate.add_argument("--seed", type=int, required=True)
    simulate.add_argument("--outlier-sessions", type=int, default=35407)
    simulate.add_argument("--threshold", type=int, default=30000)
    simulate.add_argument("--data-dir")
    simulate.set_defaults(func=cmd_simulate)

    copilot = sub.add_parser("copilot", help="game building copilot")
    copilot_sub = copilot.add_subparsers(dest="copilot_command", required=True)
    expand = copilot_sub.add_parser("expand", help="expand a seed into a game file")
    expand.add_argument("--seed", required=True)
    expand.add_argument("--template")
    expand.add_argument("--out", required=True)
    _add_backend_args(expand)
    expand.set_defaults(func=cmd_copilot_expand)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
