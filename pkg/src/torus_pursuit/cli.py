"""Command line entry point: ``torus-pursuit {train,sweep,baseline,replay,export}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .ddpg import TrainConfig, train
from .engine import EpisodeConfig
from .harness import (TRAJECTORY_HELP, SweepSpec, export_trajectory, import_trajectory, make_policy,
                      run_episode, summarize_training, sweep, sweep_csv)

log = logging.getLogger("torus_pursuit")

DEFAULT_RATIOS = "0.4,0.5,0.6,0.7,0.8,0.9,1.0,1.1,1.2,1.3,1.4"


def load_config(path: str | None) -> tuple[EpisodeConfig, dict]:
    """Read ``{"episode": {...}, "train": {...}}``; both sections optional."""
    if path is None:
        return EpisodeConfig(), {}
    doc = json.loads(Path(path).read_text())
    unknown = set(doc) - {"episode", "train"}
    if unknown:
        raise SystemExit(f"{path}: unknown top-level keys {sorted(unknown)}")
    return EpisodeConfig.from_dict(doc.get("episode", {})), doc.get("train", {})


def _ratios(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def cmd_train(args) -> int:
    episode_cfg, train_doc = load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.episodes is not None:
        overrides["episodes"] = args.episodes
    if args.no_comm:
        overrides["comm_enabled"] = False
    cfg = TrainConfig.from_dict({**train_doc, **overrides})
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(
        {"episode": json.loads(episode_cfg.to_json()), "train": cfg.to_dict()}, indent=2))

    metrics_path = out / "metrics.csv"

    def progress(m):
        if (m.episode + 1) % args.log_every == 0:
            log.info("episode %d  reward %.1f  captured %s  |v_P| %.4f", m.episode, m.reward, m.captured,
                     m.predator_speed)

    result = train(cfg, episode_cfg, out, progress)
    metrics_path.write_text(summarize_training(result.metrics))
    log.info("wrote %s and checkpoints under %s", metrics_path, out)
    return 0


def cmd_sweep(args) -> int:
    episode_cfg, _ = load_config(args.config)
    spec = SweepSpec(_ratios(args.ratios), args.episodes, args.policy, args.seed)
    rows = sweep(spec, episode_cfg, args.workers)
    _emit(sweep_csv(rows), args.out)
    return 0


def cmd_baseline(args) -> int:
    episode_cfg, _ = load_config(args.config)
    chunks = []
    for i, source in enumerate(args.policy or ["greedy", "pincer"]):
        spec = SweepSpec(_ratios(args.ratios), args.episodes, source, args.seed)
        text = sweep_csv(sweep(spec, episode_cfg, args.workers), {"policy": make_policy(source).name})
        chunks.append(text if i == 0 else text.split("\n", 1)[1])
    _emit("".join(chunks), args.out)
    return 0


def _episode_config(args) -> EpisodeConfig:
    cfg, _ = load_config(args.config)
    return cfg.with_ratio(args.ratio) if args.ratio is not None else cfg


def cmd_export(args) -> int:
    res = run_episode(make_policy(args.policy), _episode_config(args), args.seed, args.index)
    export_trajectory(res.record, Path(args.out))
    print(f"captured={res.captured} steps={res.steps} total_reward={res.total_reward!r} rows={len(res.record.rows)}")
    return 0


def cmd_replay(args) -> int:
    stored = import_trajectory(Path(args.trajectory))
    res = run_episode(make_policy(args.policy), _episode_config(args), args.seed, args.index)
    same = res.record == stored
    print(f"captured={res.captured} steps={res.steps} total_reward={res.total_reward!r} "
          f"matches_stored={'yes' if same else 'no'}")
    return 0 if same else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="torus-pursuit", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed_required=False):
        sp.add_argument("--config", help="JSON file with optional 'episode' and 'train' sections")
        sp.add_argument("--seed", type=int, required=seed_required)

    t = sub.add_parser("train", help="train decentralized DDPG predators")
    common(t)
    t.add_argument("--episodes", type=int)
    t.add_argument("--no-comm", action="store_true", help="hide teammates from each predator's observation")
    t.add_argument("--out", required=True, help="run directory (metrics.csv, config.json, checkpoints)")
    t.add_argument("--log-every", type=int, default=100)
    t.set_defaults(func=cmd_train)

    for name, fn, helptext in [("sweep", cmd_sweep, "capture rate vs speed ratio for one policy"),
                               ("baseline", cmd_baseline, "sweep several policies into one table")]:
        s = sub.add_parser(name, help=helptext)
        common(s, seed_required=True)
        s.add_argument("--ratios", default=DEFAULT_RATIOS, help="comma list of |v_P|/|v_E|")
        s.add_argument("--episodes", type=int, default=100, help="episodes per ratio")
        s.add_argument("--workers", type=int, default=1)
        s.add_argument("--out", help="CSV path (default stdout)")
        if name == "sweep":
            s.add_argument("--policy", default="pincer", help="pincer | greedy | ckpt:DIR")
        else:
            s.add_argument("--policy", action="append",
                           help="repeatable; default greedy and pincer")
        s.set_defaults(func=fn)

    for name, fn in [("export", cmd_export), ("replay", cmd_replay)]:
        s = sub.add_parser(name, help=f"{name} one episode trajectory", description=TRAJECTORY_HELP)
        common(s)
        s.add_argument("--policy", default="pincer")
        s.add_argument("--ratio", type=float, help="|v_P|/|v_E| (default: config predator_speed)")
        s.add_argument("--index", type=int, default=0, help="episode index within the seed's stream")
        if name == "export":
            s.add_argument("--out", required=True)
        else:
            s.add_argument("--trajectory", required=True, help="previously exported CSV to check against")
        s.set_defaults(func=fn)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(message)s")
    if args.command in ("export", "replay") and args.seed is None:
        args.seed = 0
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
