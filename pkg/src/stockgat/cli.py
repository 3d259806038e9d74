"""Command-line entry point.

Subcommands: train, evaluate, backtest, gradcheck, gen-synth.
Option precedence: CLI flag > config file > built-in default.
Exit codes: 0 success, 1 internal failure, 2 user/config error.
"""

from __future__ import annotations

import argparse
import datetime as dt
import logging
import os
import sys

import numpy as np

from . import autodiff as ad
from .backtest import compare_benchmark, run_strategy
from .gat import dump_attention
from .market_data import (SynthConfig, SynthConfigError, generate_synthetic,
                          load_market_data, write_prices_csv, write_sentiment_csv)
from .metrics import confusion, f1_accuracy, mcc
from .model import ModelConfig, MovementModel
from .pipeline import (attach_adjacency, file_sha256, load_sections,
                       read_manifest, write_manifest, yearly_snapshots)
from .relation_graph import (load_relations, load_universe, write_relations_csv,
                             write_universe_csv)
from .report import (write_backtest_report, write_history_figure,
                     write_metrics_json, write_predictions_csv)
from .seeding import stream
from .training import (TrainConfig, TrainingDiverged, fit, predictions_for,
                       write_history_csv)

logger = logging.getLogger(__name__)


class UserError(Exception):
    """Bad input from the user: wrong paths, bad config, guarded operations."""


DEFAULTS = {
    "prices": None, "sentiment": None, "relations": None, "universe": None,
    "benchmark": None, "out": "run", "seed": 0, "k": 4,
    "learning_rate": 4e-4, "max_epochs": 8000, "batch_size": 8, "patience": 50,
    "lookback": 5, "hidden_tech": 64, "hidden_media": 16, "fused_dim": 64,
    "heads": 4, "head_dim": 16, "threshold": 0.5,
}

_INT_KEYS = {"seed", "k", "max_epochs", "batch_size", "patience", "lookback",
             "hidden_tech", "hidden_media", "fused_dim", "heads", "head_dim"}
_FLOAT_KEYS = {"learning_rate", "threshold"}


def _parse_config_file(path) -> dict:
    if not os.path.exists(path):
        raise UserError(f"config file not found: {path}")
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UserError(f"{path}:{lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in DEFAULTS:
                raise UserError(f"{path}:{lineno}: unknown config key {key!r}")
            values[key] = value
    return values


def _cast(key, value):
    if value is None or not isinstance(value, str):
        return value
    if key in _INT_KEYS:
        return int(value)
    if key in _FLOAT_KEYS:
        return float(value)
    return value


def resolve_config(args) -> dict:
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        cfg.update(_parse_config_file(args.config))
    for key in DEFAULTS:
        flag = getattr(args, key, None)
        if flag is not None:
            cfg[key] = flag
    return {k: _cast(k, v) for k, v in cfg.items()}


def _require_file(path, what: str) -> str:
    if path is None:
        raise UserError(f"missing required {what} file (set --{what} or config key)")
    if not os.path.exists(path):
        raise UserError(f"{what} file not found: {path}")
    return path


def _model_config(cfg) -> ModelConfig:
    return ModelConfig(lookback=cfg["lookback"], hidden_tech=cfg["hidden_tech"],
                       hidden_media=cfg["hidden_media"], fused_dim=cfg["fused_dim"],
                       heads=cfg["heads"], head_dim=cfg["head_dim"])


def _load_snapshots(cfg, first_date, last_date):
    if cfg["relations"] is None or cfg["universe"] is None:
        return None
    records = load_relations(_require_file(cfg["relations"], "relations"))
    universe = load_universe(_require_file(cfg["universe"], "universe"))
    return yearly_snapshots(records, universe, first_date, last_date)


def _prepare(cfg):
    prices = _require_file(cfg["prices"], "prices")
    sentiment = _require_file(cfg["sentiment"], "sentiment")
    days_by_symbol, split, report = load_sections(prices, sentiment,
                                                  lookback=cfg["lookback"])
    all_sections = split.train + split.validation + split.test
    snapshots = _load_snapshots(cfg, all_sections[0].date, all_sections[-1].date)
    attach_adjacency(all_sections, snapshots)
    return days_by_symbol, split, report, snapshots


# ---------------------------------------------------------------------------
# subcommands


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    days_by_symbol, split, ingest_report, _ = _prepare(cfg)

    train_config = TrainConfig(
        learning_rate=cfg["learning_rate"], max_epochs=cfg["max_epochs"],
        batch_size=cfg["batch_size"], patience=cfg["patience"],
        threshold=cfg["threshold"], seed=cfg["seed"], model=_model_config(cfg))
    model = MovementModel(train_config.model, cfg["seed"])

    try:
        model, history = fit(model, split.train, split.validation, train_config,
                             progress=True)
    except TrainingDiverged as exc:
        with open(os.path.join(out, "diverged.txt"), "w", encoding="utf-8") as fh:
            fh.write(f"{exc}\nbatch dates: "
                     + " ".join(d.isoformat() for d in exc.batch_dates) + "\n")
        raise

    model.save(os.path.join(out, "checkpoint.txt"))
    write_history_csv(os.path.join(out, "history.csv"), history)
    write_history_figure(os.path.join(out, "history.png"), history)
    ingest_report.write(os.path.join(out, "ingest_report.txt"))

    manifest = {f"config.{k}": v for k, v in sorted(cfg.items()) if k != "out"}
    manifest["command"] = "train"
    for key in ("prices", "sentiment", "relations", "universe"):
        if cfg[key]:
            manifest[f"sha256.{key}"] = file_sha256(cfg[key])
    for part in ("train", "validation", "test"):
        lo, hi = split.date_range(part)
        manifest[f"{part}_start"] = lo.isoformat()
        manifest[f"{part}_end"] = hi.isoformat()
    write_manifest(os.path.join(out, "manifest.txt"), manifest)
    print(f"trained {len(history)} epochs; artifacts in {out}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = resolve_config(args)
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    model = MovementModel.load(_require_file(args.checkpoint, "checkpoint"))
    cfg["lookback"] = model.config.lookback
    _, split, _, _ = _prepare(cfg)

    sections = getattr(split, args.split)
    records = predictions_for(model, sections)
    c = confusion(records, threshold=cfg["threshold"])
    f1, acc = f1_accuracy(c)
    write_metrics_json(os.path.join(out, "metrics.json"), f1, acc, mcc(c))
    write_predictions_csv(os.path.join(out, "predictions.csv"), records)

    if args.dump_attention:
        att_dir = os.path.join(out, "attention")
        os.makedirs(att_dir, exist_ok=True)
        for s in sections:
            _, alphas = model.forward_day(s.price, s.media, s.adj,
                                          return_attention=True)
            dump_attention(os.path.join(att_dir, f"{s.date.isoformat()}.txt"),
                           s.date, s.symbols, alphas)
    print(f"{args.split}: f1={f1:.4f} acc={acc:.4f} mcc={mcc(c):.4f}")
    return 0


def cmd_backtest(args) -> int:
    cfg = resolve_config(args)
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    checkpoint = _require_file(args.checkpoint, "checkpoint")
    start = dt.date.fromisoformat(args.start)
    end = dt.date.fromisoformat(args.end)
    if end < start:
        raise UserError(f"backtest range {start}..{end} is empty")

    manifest_path = os.path.join(os.path.dirname(checkpoint) or ".", "manifest.txt")
    if os.path.exists(manifest_path):
        manifest = read_manifest(manifest_path)
        t_start = dt.date.fromisoformat(manifest["train_start"])
        t_end = dt.date.fromisoformat(manifest["train_end"])
        if start <= t_end and end >= t_start and not args.allow_overlap:
            raise UserError(
                f"backtest range {start}..{end} overlaps training dates "
                f"{t_start}..{t_end}; pass --allow-overlap to force")

    model = MovementModel.load(checkpoint)
    cfg["lookback"] = model.config.lookback
    days_by_symbol, split, _, _ = _prepare(cfg)
    sections = [s for s in split.train + split.validation + split.test
                if start <= s.date <= end]
    if not sections:
        raise UserError(f"no trading days with data in {start}..{end}")

    records = predictions_for(model, sections)
    result = run_strategy(records, days_by_symbol, k=cfg["k"],
                          threshold=cfg["threshold"])
    bench_rows = _load_benchmark(_require_file(cfg["benchmark"], "benchmark"))
    report = compare_benchmark(result, bench_rows)
    write_backtest_report(out, report)
    write_predictions_csv(os.path.join(out, "predictions.csv"), records)
    print(report.summary())
    return 0


def _load_benchmark(path):
    """Benchmark series from a price CSV holding a single index symbol."""
    from .market_data import load_prices, MarketDay
    rows = load_prices(path)
    symbols = {sym for _, sym in rows}
    if len(symbols) != 1:
        raise UserError(f"{path}: benchmark file must hold exactly one symbol, "
                        f"found {sorted(symbols)}")
    days = [MarketDay(date=date, symbol=sym, adj_close=px["adj_close"],
                      high=px["high"], low=px["low"], open=px["open"],
                      sentiment=0.5, activity=0.0)
            for (date, sym), px in sorted(rows.items())]
    return days


def cmd_gradcheck(args) -> int:
    seed = args.seed if args.seed is not None else 0
    rng = stream(seed, "gradcheck-data")
    n_stocks, lookback = 4, 3
    config = ModelConfig(lookback=lookback, hidden_tech=6, hidden_media=4,
                         fused_dim=5, heads=2, head_dim=3)
    model = MovementModel(config, seed)
    price = rng.uniform(0.95, 1.05, size=(n_stocks, lookback, 3))
    media = rng.uniform(0.5, 2.0, size=(n_stocks, lookback, 2))
    labels = rng.integers(0, 2, size=n_stocks)
    adj = np.eye(n_stocks, dtype=bool)
    adj[0, 1] = adj[1, 0] = adj[1, 2] = adj[2, 1] = True

    def f():
        p = model.forward_day(price, media, adj)
        return ad.bce_loss(p, labels)

    report = ad.grad_check(f, model.parameters(), tolerance=1e-4)
    print(report.summary())
    return 0 if report.passed else 1


def cmd_gen_synth(args) -> int:
    out = args.out if args.out else "synth"
    os.makedirs(out, exist_ok=True)
    config = SynthConfig(n_stocks=args.stocks, n_days=args.days,
                         signal=args.signal, p=args.p)
    try:
        dataset = generate_synthetic(config, args.seed if args.seed is not None else 0)
    except SynthConfigError as exc:
        raise UserError(str(exc)) from exc
    write_prices_csv(os.path.join(out, "prices.csv"), dataset.days_by_symbol)
    write_sentiment_csv(os.path.join(out, "sentiment.csv"), dataset.days_by_symbol)
    write_relations_csv(os.path.join(out, "relations.csv"), dataset.relations)
    write_universe_csv(os.path.join(out, "universe.csv"), dataset.universe)
    write_prices_csv(os.path.join(out, "benchmark.csv"),
                     {"INDEX": dataset.benchmark})
    with open(os.path.join(out, "signal.txt"), "w", encoding="utf-8") as fh:
        for key in sorted(dataset.signal_info):
            fh.write(f"{key}={dataset.signal_info[key]}\n")
    print(f"synthetic dataset in {out}")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stockgat",
        description="Stock movement classification and trading backtests.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")

    p_train = sub.add_parser("train", help="train a model end to end")
    common(p_train)
    for key in ("prices", "sentiment", "relations", "universe"):
        p_train.add_argument(f"--{key}")
    for key in ("max-epochs", "batch-size", "patience", "lookback",
                "hidden-tech", "hidden-media", "fused-dim", "heads", "head-dim"):
        p_train.add_argument(f"--{key}", type=int, dest=key.replace("-", "_"))
    p_train.add_argument("--learning-rate", type=float, dest="learning_rate")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("evaluate", help="metrics on a held-out split")
    common(p_eval)
    p_eval.add_argument("--checkpoint", required=True)
    for key in ("prices", "sentiment", "relations", "universe"):
        p_eval.add_argument(f"--{key}")
    p_eval.add_argument("--split", choices=("validation", "test"), default="test")
    p_eval.add_argument("--dump-attention", action="store_true")
    p_eval.set_defaults(func=cmd_evaluate)

    p_back = sub.add_parser("backtest", help="top-k strategy vs benchmark")
    common(p_back)
    p_back.add_argument("--checkpoint", required=True)
    for key in ("prices", "sentiment", "relations", "universe", "benchmark"):
        p_back.add_argument(f"--{key}")
    p_back.add_argument("--start", required=True, help="ISO date")
    p_back.add_argument("--end", required=True, help="ISO date")
    p_back.add_argument("--k", type=int)
    p_back.add_argument("--allow-overlap", action="store_true",
                        help="permit overlap with training dates")
    p_back.set_defaults(func=cmd_backtest)

    p_grad = sub.add_parser("gradcheck", help="full-model finite-difference check")
    p_grad.add_argument("--seed", type=int)
    p_grad.set_defaults(func=cmd_gradcheck)

    p_synth = sub.add_parser("gen-synth", help="write a planted-signal dataset")
    p_synth.add_argument("--out")
    p_synth.add_argument("--seed", type=int)
    p_synth.add_argument("--stocks", type=int, default=20)
    p_synth.add_argument("--days", type=int, default=300)
    p_synth.add_argument("--signal", choices=("sentiment", "contagion", "none"),
                         default="sentiment")
    p_synth.add_argument("--p", type=float, default=0.8)
    p_synth.set_defaults(func=cmd_gen_synth)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UserError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # internal failure
        logger.exception("command failed: %s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
