"""Command-line entry point: ``twosided {ingest,train,backtest,frontier,compare,report}``.

Exit codes: 0 success, 2 configuration error, 3 data or artifact error,
4 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .agent import CheckpointError, SacAgent, load_agent, read_checkpoint, save_agent, train
from .config import (
    ConfigError,
    ExperimentConfig,
    load_config,
    parse_strategy,
    strategy_slug,
    substream_seed,
    write_resolved,
)
from .data import DataError, MarketFrame, align, load_csv, resample_frame, split, warmup_rows
from .env import PortfolioEnv, run_episode
from .metrics import COLUMN_TITLES, REPORT_COLUMNS, compute_report, weight_return_distribution
from .sppo import efficient_frontier, frontier_to_csv
from .strategies import AgentPolicy, EqualWeight, SppoStrategy
from .synthetic import bundled_dir
from .trace import EpisodeTrace, TraceError

log = logging.getLogger("twosided")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_RUNTIME = 0, 2, 3, 4
DEFAULT_CONFIG = bundled_dir() / "synth3.yaml"


@dataclass(frozen=True, eq=False)
class Frames:
    hourly: MarketFrame | None  # None when decisions use the source resolution
    interval: MarketFrame
    source: MarketFrame
    warmup: int
    train_range: tuple[int, int]
    test_range: tuple[int, int]

    @property
    def train(self) -> MarketFrame:
        return self.interval.slice(*self.train_range)

    @property
    def test(self) -> MarketFrame:
        return self.interval.slice(*self.test_range)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def ingest_frames(cfg: ExperimentConfig) -> tuple[MarketFrame, MarketFrame]:
    cfg.validate_files()
    d = cfg.data
    series = []
    for i, p in enumerate(cfg.data_paths()):
        sym = d.symbols[i] if d.symbols else None
        series.append(
            load_csv(p, d.schema, delimiter=d.delimiter, symbol=sym, interval=d.source_interval, fill_gaps=d.fill_gaps)
        )
    source = align(series)
    target = cfg.env.interval_hours
    interval = source if source.interval == target else resample_frame(source, target)
    return source, interval


def _frames_from(cfg: ExperimentConfig, source: MarketFrame, interval: MarketFrame) -> Frames:
    warm = warmup_rows(cfg.env.history, source.interval, interval.interval)
    sp = split(interval, cfg.data.train_steps, cfg.data.test_steps, warm)
    hourly = None if source.interval == interval.interval else source
    return Frames(hourly, interval, source, warm, sp.train_range, sp.test_range)


def prepare_frames(cfg: ExperimentConfig, frames_dir: str | None) -> Frames:
    if frames_dir:
        d = Path(frames_dir)
        for name in ("hourly.csv", "interval.csv"):
            if not (d / name).is_file():
                raise DataError(f"frame file not found: {d / name}")
        source = MarketFrame.from_csv(d / "hourly.csv")
        interval = MarketFrame.from_csv(d / "interval.csv", cfg.env.interval_hours)
    else:
        source, interval = ingest_frames(cfg)
    return _frames_from(cfg, source, interval)


def _out(args, cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_resolved(cfg, out)
    return out


# commands


def cmd_ingest(args, cfg: ExperimentConfig) -> int:
    source, interval = ingest_frames(cfg)
    frames = _frames_from(cfg, source, interval)
    out = _out(args, cfg)
    source.to_csv(out / "hourly.csv")
    interval.to_csv(out / "interval.csv")
    manifest = {
        "symbols": list(interval.symbols),
        "m": interval.n_assets,
        "source_interval_hours": source.interval,
        "interval_hours": interval.interval,
        "rows": {"hourly": len(source), "interval": len(interval)},
        "dropped_rows": source.dropped,
        "warmup": frames.warmup,
        "train_range": list(frames.train_range),
        "test_range": list(frames.test_range),
        "inputs": [{"file": p.name, "sha256": _sha256(p)} for p in cfg.data_paths()],
        "outputs": {n: _sha256(out / n) for n in ("hourly.csv", "interval.csv")},
    }
    manifest["hash"] = hashlib.sha256(json.dumps(manifest, sort_keys=True).encode()).hexdigest()
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"ingested {manifest['m']} assets, {len(interval)} rows at {interval.interval:g} h -> {out}")
    return EXIT_OK


def _rl_variant(name: str) -> str:
    kind, variant = parse_strategy(name)
    if kind != "rl":
        raise ConfigError(f"training needs an rl:<reward> strategy, got {name!r}")
    return variant


def _new_agent(cfg: ExperimentConfig, m: int) -> SacAgent:
    obs = (m, 4, cfg.env.history)
    return SacAgent(obs, m + 1, cfg.network, cfg.sac, seed=substream_seed(cfg.seed, "init"))


def cmd_train(args, cfg: ExperimentConfig) -> int:
    variant = _rl_variant(cfg.strategy)
    frames = prepare_frames(cfg, args.frames)
    out = _out(args, cfg)
    env_cfg = dataclasses.replace(cfg.env, reward=variant)
    noise = dataclasses.replace(cfg.noise, seed=substream_seed(cfg.seed, "noise"))
    train_frame = frames.train

    def factory(ep: int) -> PortfolioEnv:
        rng = np.random.default_rng([noise.seed, ep])
        return PortfolioEnv(env_cfg, train_frame, frames.hourly, noise=noise if noise.enabled else None, rng=rng)

    agent = _new_agent(cfg, frames.interval.n_assets)
    result = train(
        factory,
        agent,
        cfg.train.episodes,
        seed=substream_seed(cfg.seed, "train"),
        max_updates=cfg.train.max_updates,
        max_seconds=cfg.train.max_seconds,
        start=frames.warmup,
    )
    slug = strategy_slug(cfg.strategy)
    ckpt = out / f"checkpoint_{slug}.ckpt"
    save_agent(agent, ckpt, {"reward": variant, "symbols": list(frames.interval.symbols), "seed": cfg.seed})
    result.to_csv(out / f"curve_{slug}.csv")
    print(f"trained {slug}: {len(result.curve)} episodes, {result.updates} updates -> {ckpt}")
    return EXIT_OK


def _policy(cfg: ExperimentConfig, name: str, frames: Frames, checkpoint: str | None, out: Path):
    kind, variant = parse_strategy(name)
    if kind == "equal_weight":
        return EqualWeight()
    if kind == "sppo":
        return SppoStrategy(dataclasses.replace(cfg.sppo, measure=variant), frames.interval)
    path = Path(checkpoint) if checkpoint else out / f"checkpoint_{strategy_slug(name)}.ckpt"
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found for {name}: {path}")
    _, header = read_checkpoint(path)
    if header["spec"] != cfg.network.to_dict():
        raise CheckpointError(f"{path}: network spec {header['spec']} differs from config {cfg.network.to_dict()}")
    agent = _new_agent(cfg, frames.interval.n_assets)
    load_agent(agent, path)
    return AgentPolicy(agent, strategy_slug(name))


def run_backtest(cfg: ExperimentConfig, name: str, frames: Frames, out: Path, checkpoint: str | None = None) -> Path:
    kind, variant = parse_strategy(name)
    env_cfg = dataclasses.replace(cfg.env, reward=variant) if kind == "rl" else cfg.env
    policy = _policy(cfg, name, frames, checkpoint, out)
    env = PortfolioEnv(env_cfg, frames.test, frames.hourly)
    trace = run_episode(env, policy, start=frames.warmup)
    slug = strategy_slug(name)
    path = out / f"trace_{slug}.csv"
    trace.to_csv(path)
    compute_report(trace).to_json(out / f"report_{slug}.json")
    return path


def cmd_backtest(args, cfg: ExperimentConfig) -> int:
    frames = prepare_frames(cfg, args.frames)
    out = _out(args, cfg)
    path = run_backtest(cfg, cfg.strategy, frames, out, args.checkpoint)
    print(f"backtest {cfg.strategy} -> {path}")
    return EXIT_OK


def cmd_frontier(args, cfg: ExperimentConfig) -> int:
    frames = prepare_frames(cfg, args.frames)
    out = _out(args, cfg)
    measure = args.measure or cfg.sppo.measure
    sppo = dataclasses.replace(cfg.sppo, measure=measure)
    row = frames.test_range[0] + frames.warmup if args.row is None else args.row
    if not 1 <= row < len(frames.interval):
        raise DataError(f"row {row} outside 1..{len(frames.interval) - 1}")
    c = frames.interval.close[:, max(0, row - sppo.window) : row + 1]
    frontier = efficient_frontier((c[:, 1:] / c[:, :-1] - 1.0).T, sppo)
    path = out / f"frontier_{measure.lower()}.csv"
    frontier_to_csv(frontier, path, frames.interval.symbols)
    print(f"{len(frontier)} frontier points at row {row} -> {path}")
    return EXIT_OK


def _trace_name(path: Path) -> str:
    stem = path.stem
    return stem[len("trace_") :] if stem.startswith("trace_") else stem


def cmd_compare(args, cfg: ExperimentConfig) -> int:
    out = _out(args, cfg)
    frames = prepare_frames(cfg, args.frames)
    if args.traces:
        paths = [Path(p) for p in args.traces]
        for p in paths:
            if not p.is_file():
                raise DataError(f"trace file not found: {p}")
    else:
        paths = [run_backtest(cfg, name, frames, out) for name in cfg.strategies]
    if len(paths) < 2:
        raise ConfigError("compare needs at least two traces")
    rows, dists = [], {}
    for p in paths:
        name = _trace_name(p)
        trace = EpisodeTrace.from_csv(p)
        report = compute_report(trace)
        rows.append((name, report))
        dist = weight_return_distribution(trace, frames.interval)
        dist.to_csv(out / f"hist_{name}.csv")
        dists[name] = dist.summary()
    with (out / "comparison.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["strategy", *REPORT_COLUMNS])
        for name, rep in rows:
            w.writerow([name, *rep.row()[: len(REPORT_COLUMNS)]])
    (out / "distributions.json").write_text(json.dumps(dists, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(format_table(out / "comparison.csv"))
    return EXIT_OK


def format_table(path: Path) -> str:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:1] != ["strategy"]:
        raise DataError(f"{path}: not a comparison table")
    header = ["Strategy"] + [COLUMN_TITLES.get(c, c) for c in rows[0][1:]]
    body = [[r[0]] + ["n/a" if v == "" else f"{float(v):.3f}" for v in r[1:]] for r in rows[1:]]
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    lines += ["| " + " | ".join(r) + " |" for r in body]
    return "\n".join(lines)


def cmd_report(args, cfg: ExperimentConfig) -> int:
    out = Path(cfg.out)
    src = Path(args.input) if args.input else out / "comparison.csv"
    if not src.is_file():
        raise DataError(f"comparison table not found: {src}")
    table = format_table(src)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.md").write_text(table + "\n", encoding="utf-8")
    print(table)
    return EXIT_OK


COMMANDS = {
    "ingest": cmd_ingest,
    "train": cmd_train,
    "backtest": cmd_backtest,
    "frontier": cmd_frontier,
    "compare": cmd_compare,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="twosided", description="Two-sided portfolio RL experiments.")
    sub = ap.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help=f"YAML/JSON experiment config (default: bundled {DEFAULT_CONFIG.name})")
    common.add_argument("--seed", type=int, help="root seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--mode", choices=("paper", "strict"), help="accounting mode")
    common.add_argument("--frames", help="directory with hourly.csv/interval.csv from ingest")
    common.add_argument("--strategy", help="equal_weight, sppo:MV|MAD|CVaR or rl:pnl|return")
    common.add_argument("-v", "--verbose", action="store_true")
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "train":
            p.add_argument("--episodes", type=int)
            p.add_argument("--max-updates", type=int)
            p.add_argument("--max-seconds", type=float)
        if name == "backtest":
            p.add_argument("--checkpoint")
        if name == "frontier":
            p.add_argument("--measure", choices=("MV", "MAD", "CVaR"))
            p.add_argument("--row", type=int, help="interval row of the estimation date")
        if name == "compare":
            p.add_argument("--traces", nargs="+")
        if name == "report":
            p.add_argument("--input", help="comparison CSV (default: <out>/comparison.csv)")
    return ap


def _overrides(args) -> dict:
    ov = {}
    for flag, key in (("seed", "seed"), ("out", "out"), ("mode", "env.accounting_mode"), ("strategy", "strategy"),
                      ("episodes", "train.episodes"), ("max_updates", "train.max_updates"),
                      ("max_seconds", "train.max_seconds")):
        v = getattr(args, flag, None)
        if v is not None:
            ov[key] = v
    return ov


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config or DEFAULT_CONFIG, _overrides(args))
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, TraceError, CheckpointError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - top-level boundary
        log.debug("runtime failure", exc_info=True)
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
