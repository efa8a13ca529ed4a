"""Command-line entry point.

Subcommands: simulate (one standalone episode), synth-cohort (synthetic
players to episode files), analyze (full pipeline from a manifest or flags),
report (print a bundle's summaries), serve (HTTP session service), and play
(thin scripted client against a running service).

Exit codes: 0 success, 1 validation error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import glob
import json
import sys
import time
import urllib.error
import urllib.request
from pathlib import Path
from typing import List, Optional

from . import telemetry
from .agents import PLAYER_TYPES, make_policy
from .config import (
    ConfigError,
    CohortSpec,
    DEFAULT_COHORT,
    PipelineManifest,
    load_cohort,
    load_manifest,
    load_scenario,
)
from .flowsim import BehavioralController, ScenarioConfig, SimulationError, run_standalone
from .pipeline import PipelineError, generate_cohort, run_pipeline

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


def _timestamped(prefix: str) -> str:
    return f"{prefix}-{time.strftime('%Y%m%d-%H%M%S')}"


def _load_scenario_arg(path: Optional[str], seed: Optional[int]) -> ScenarioConfig:
    cfg = load_scenario(path) if path else ScenarioConfig()
    if seed is not None:
        cfg.rng_seed = seed
    return cfg


def cmd_simulate(args) -> int:
    cfg = _load_scenario_arg(args.scenario, args.seed)
    controllers = {}
    truth = None
    if args.player_type != "follower":
        policy = make_policy(
            args.player_type, seed=cfg.rng_seed,
            base_stock=cfg.base_stock["WS1"], reaction_week=cfg.announcement_week,
        )
        controllers["WS1"] = BehavioralController(policy)
        truth = args.player_type
    ep = run_standalone(cfg, controllers, player_id=args.player_id, truth=truth)
    if args.out:
        telemetry.write_episode(ep, Path(args.out))
        print(f"wrote {args.out}")
    print(f"player={ep.player_id} condition={ep.condition} weeks={ep.horizon()} "
          f"profit={ep.total_profit()}")
    return EXIT_OK


def cmd_synth_cohort(args) -> int:
    cfg = _load_scenario_arg(args.scenario, None)
    if args.cohort:
        spec = load_cohort(args.cohort)
    else:
        spec = CohortSpec(counts={t: dict(c) for t, c in DEFAULT_COHORT.items()})
    if args.seed is not None:
        spec.master_seed = args.seed
    out = Path(args.out or _timestamped("cohort"))
    episodes = generate_cohort(cfg, spec, out_dir=out, jobs=args.jobs)
    print(f"wrote {len(episodes)} episodes to {out}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    if args.manifest:
        manifest = load_manifest(args.manifest)
        if args.out:
            manifest.output_dir = args.out
        if args.seed is not None:
            manifest.seed = args.seed
    else:
        if not args.episodes:
            raise ConfigError("analyze needs --manifest or --episodes")
        paths: List[str] = []
        for pattern in args.episodes:
            matches = sorted(glob.glob(pattern))
            paths.extend(matches if matches else [pattern])
        manifest = PipelineManifest(
            episode_paths=paths,
            output_dir=args.out or _timestamped("analysis"),
            seed=args.seed or 0,
        )
    result = run_pipeline(manifest)
    print(f"bundle written to {result.output_dir}")
    print((result.output_dir / "summary.txt").read_text(), end="")
    return EXIT_OK


def cmd_report(args) -> int:
    bundle = Path(args.bundle)
    if not bundle.is_dir():
        raise ConfigError(f"not a bundle directory: {bundle}")
    for name in ("summary.txt", "interaction_summary.txt"):
        f = bundle / name
        if f.exists():
            print(f"== {name} ==")
            print(f.read_text(), end="")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    cfg = _load_scenario_arg(args.scenario, None)
    app = create_app(
        scenario=cfg,
        service_seed=args.seed or 0,
        session_timeout=args.session_timeout,
        telemetry_dir=Path(args.telemetry_dir) if args.telemetry_dir else None,
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def _http(method: str, url: str, body: Optional[dict] = None) -> dict:
    data = json.dumps(body).encode() if body is not None else None
    req = urllib.request.Request(
        url, data=data, method=method,
        headers={"Content-Type": "application/json"} if body is not None else {},
    )
    with urllib.request.urlopen(req) as resp:
        return json.loads(resp.read().decode())


def cmd_play(args) -> int:
    """Scripted playthrough over HTTP: follow the suggestion each week."""
    base = args.url.rstrip("/")
    view = _http("POST", f"{base}/sessions", {
        k: v for k, v in
        {"condition": args.condition, "seed": args.seed, "player_id": args.player_id}.items()
        if v is not None
    })
    sid = view["session_id"]
    while view["awaiting"] != "Done":
        if view["awaiting"] == "Allocation":
            view = _http("POST", f"{base}/sessions/{sid}/allocation",
                         {"policy": args.allocation})
            continue
        qty = view["suggestion"]
        if not args.quiet:
            print(f"week {view['week']}: inv={view['inv']} blg={view['blg']} "
                  f"order={qty}")
        view = _http("POST", f"{base}/sessions/{sid}/order", {"quantity": qty})
    print(f"done: weeks={view['weeks_played']} profit={view['total_profit']}")
    if args.out:
        req = urllib.request.Request(f"{base}/sessions/{sid}/telemetry")
        with urllib.request.urlopen(req) as resp:
            Path(args.out).write_bytes(resp.read())
        print(f"wrote {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="supplygame")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run one standalone episode")
    s.add_argument("--scenario", help="scenario INI file")
    s.add_argument("--seed", type=int)
    s.add_argument("--player-type", choices=("follower",) + PLAYER_TYPES,
                   default="follower")
    s.add_argument("--player-id", default="standalone")
    s.add_argument("--out", help="episode file to write")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("synth-cohort", help="generate a synthetic cohort")
    s.add_argument("--scenario", help="scenario INI file")
    s.add_argument("--cohort", help="cohort INI file")
    s.add_argument("--seed", type=int, help="cohort master seed override")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out", help="output directory")
    s.set_defaults(func=cmd_synth_cohort)

    s = sub.add_parser("analyze", help="run the full analysis pipeline")
    s.add_argument("--manifest", help="pipeline manifest INI file")
    s.add_argument("--episodes", nargs="*", help="episode files or globs")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", help="bundle output directory")
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("report", help="print a bundle's summaries")
    s.add_argument("bundle", help="pipeline bundle directory")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("serve", help="run the session service")
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8000)
    s.add_argument("--scenario", help="scenario INI file")
    s.add_argument("--seed", type=int, help="service seed")
    s.add_argument("--session-timeout", type=float, default=7200.0)
    s.add_argument("--telemetry-dir", help="persist completed episodes here")
    s.set_defaults(func=cmd_serve)

    s = sub.add_parser("play", help="scripted client against a running service")
    s.add_argument("--url", default="http://127.0.0.1:8000")
    s.add_argument("--condition", choices=("NoInfo", "Info"))
    s.add_argument("--seed", type=int)
    s.add_argument("--player-id")
    s.add_argument("--allocation", default="Proportional",
                   choices=("HC1First", "HC2First", "Proportional"))
    s.add_argument("--out", help="telemetry file to write")
    s.add_argument("--quiet", action="store_true")
    s.set_defaults(func=cmd_play)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, SimulationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except (PipelineError, telemetry.TelemetryError, urllib.error.URLError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
