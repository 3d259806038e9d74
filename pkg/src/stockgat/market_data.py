"""Price and social-score ingestion, window building, splits, synthetic data.

CSV formats (UTF-8, ISO-8601 dates):
  prices:    date,symbol,open,high,low,adj_close
  sentiment: date,symbol,sentiment,activity
"""

from __future__ import annotations

import csv
import datetime as dt
import logging
from dataclasses import dataclass, field

import numpy as np

from .seeding import stream

logger = logging.getLogger(__name__)

SCORE_EPS = 1e-4
SCORE_CAP = 10.0


class DataError(ValueError):
    """Malformed or out-of-range market data."""


class GapError(DataError):
    """Trading-day gap exceeds the configured calendar tolerance."""


class SplitError(ValueError):
    """Dataset too small to produce a three-way chronological split."""


@dataclass(frozen=True)
class MarketDay:
    """One stock's record for one trading day."""

    date: dt.date
    symbol: str
    adj_close: float
    high: float
    low: float
    open: float
    sentiment: float
    activity: float

    def __post_init__(self):
        for name in ("adj_close", "high", "low", "open"):
            if not getattr(self, name) > 0:
                raise DataError(f"{self.symbol} {self.date}: nonpositive {name}")
        if not (0.0 <= self.sentiment <= 1.0):
            raise DataError(f"{self.symbol} {self.date}: sentiment {self.sentiment} outside [0, 1]")
        if self.activity < 0:
            raise DataError(f"{self.symbol} {self.date}: negative activity")


@dataclass
class SampleWindow:
    """A lookback window of normalized features plus the next-day movement label."""

    symbol: str
    target_date: dt.date
    price_feats: np.ndarray   # T x 3 ratios: adj_close, high, low
    media_feats: np.ndarray   # T x 2 ratios: sentiment, activity
    label: int                # 1 = positive movement, 0 = negative


@dataclass
class DaySection:
    """All stocks' windows sharing one target date, in symbol order."""

    date: dt.date
    symbols: list
    price: np.ndarray    # N x T x 3
    media: np.ndarray    # N x T x 2
    labels: np.ndarray   # N, int
    adj: np.ndarray | None = None   # N x N boolean, attached once graphs are known


@dataclass
class DatasetSplit:
    """Chronological 70/15/15 partition of per-date cross-sections."""

    train: list
    validation: list
    test: list

    def date_range(self, part: str):
        sections = getattr(self, part)
        return sections[0].date, sections[-1].date


@dataclass
class IngestReport:
    """Counts of flagged-but-retained anomalies seen during ingestion."""

    rows: int = 0
    low_above_close: int = 0
    missing_sentiment_carried: int = 0
    missing_sentiment_defaulted: int = 0
    score_floors: int = 0

    def lines(self):
        return [f"{k}={v}" for k, v in sorted(vars(self).items())]

    def write(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(self.lines()) + "\n")


# ---------------------------------------------------------------------------
# ingestion


def _parse_date(text: str) -> dt.date:
    return dt.date.fromisoformat(text.strip())


def load_prices(path):
    """Read the price CSV into {(date, symbol): row dict}."""
    rows = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"date", "symbol", "open", "high", "low", "adj_close"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise DataError(f"{path}: expected header with {sorted(required)}")
        for row in reader:
            key = (_parse_date(row["date"]), row["symbol"].strip())
            rows[key] = {k: float(row[k]) for k in ("open", "high", "low", "adj_close")}
    return rows


def load_sentiment(path):
    """Read the sentiment CSV into {(date, symbol): (sentiment, activity)}."""
    rows = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"date", "symbol", "sentiment", "activity"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise DataError(f"{path}: expected header with {sorted(required)}")
        for row in reader:
            key = (_parse_date(row["date"]), row["symbol"].strip())
            rows[key] = (float(row["sentiment"]), float(row["activity"]))
    return rows


def load_market_data(prices_path, sentiment_path,
                     default_sentiment: float = 0.5, default_activity: float = 0.0):
    """Merge price and sentiment files into per-symbol day series.

    Days with no sentiment row carry the symbol's last seen scores forward
    (flagged); a symbol with no prior scores gets the defaults.  Rows whose
    adjusted low exceeds the adjusted close are flagged but retained.
    """
    prices = load_prices(prices_path)
    scores = load_sentiment(sentiment_path)
    report = IngestReport()

    by_symbol: dict[str, list[MarketDay]] = {}
    last_scores: dict[str, tuple] = {}
    for (date, symbol), px in sorted(prices.items()):
        if (date, symbol) in scores:
            sent, act = scores[(date, symbol)]
            last_scores[symbol] = (sent, act)
        elif symbol in last_scores:
            sent, act = last_scores[symbol]
            report.missing_sentiment_carried += 1
        else:
            sent, act = default_sentiment, default_activity
            report.missing_sentiment_defaulted += 1
        day = MarketDay(date=date, symbol=symbol, adj_close=px["adj_close"],
                        high=px["high"], low=px["low"], open=px["open"],
                        sentiment=sent, activity=act)
        if day.low > day.adj_close:
            report.low_above_close += 1
        by_symbol.setdefault(symbol, []).append(day)
        report.rows += 1
    for days in by_symbol.values():
        days.sort(key=lambda d: d.date)
    return by_symbol, report


def write_prices_csv(path, days_by_symbol):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "symbol", "open", "high", "low", "adj_close"])
        for day in sorted((d for days in days_by_symbol.values() for d in days),
                          key=lambda d: (d.date, d.symbol)):
            writer.writerow([day.date.isoformat(), day.symbol,
                             repr(day.open), repr(day.high), repr(day.low),
                             repr(day.adj_close)])


def write_sentiment_csv(path, days_by_symbol):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "symbol", "sentiment", "activity"])
        for day in sorted((d for days in days_by_symbol.values() for d in days),
                          key=lambda d: (d.date, d.symbol)):
            writer.writerow([day.date.isoformat(), day.symbol,
                             repr(day.sentiment), repr(day.activity)])


# ---------------------------------------------------------------------------
# normalization and window building


def normalize_prices(days, max_gap_days: int = 7) -> np.ndarray:
    """Day-over-day ratios for (adj_close, high, low) over consecutive days."""
    if len(days) < 2:
        raise DataError("normalize_prices: need at least two consecutive days")
    out = np.empty((len(days) - 1, 3))
    for i in range(1, len(days)):
        prev, cur = days[i - 1], days[i]
        if (cur.date - prev.date).days > max_gap_days:
            raise GapError(f"{cur.symbol}: gap {prev.date} -> {cur.date} "
                           f"exceeds {max_gap_days} calendar days")
        for j, name in enumerate(("adj_close", "high", "low")):
            p, c = getattr(prev, name), getattr(cur, name)
            if p <= 0 or c <= 0:
                raise DataError(f"{cur.symbol} {cur.date}: nonpositive {name}")
            out[i - 1, j] = c / p
    return out


def normalize_scores(scores, eps: float = SCORE_EPS, cap: float = SCORE_CAP):
    """Previous-day score ratios with an epsilon floor and a hard cap.

    Returns (ratios, floor_count); floor_count tallies how often a
    zero-or-near-zero previous-day score forced the epsilon floor.
    """
    floors = 0
    out = np.empty(len(scores) - 1) if len(scores) > 1 else np.empty(0)
    for i in range(1, len(scores)):
        prev = scores[i - 1]
        if prev < eps:
            prev = eps
            floors += 1
        out[i - 1] = min(scores[i] / prev, cap)
    return out, floors


def build_windows(days_by_symbol, lookback: int = 5, max_gap_days: int = 7,
                  report: IngestReport | None = None):
    """One labeled window per (symbol, date) with enough history and a next day.

    Eligible window count per symbol is max(0, len(days) - lookback - 1).
    Windows spanning a calendar gap larger than ``max_gap_days`` are skipped
    and logged.
    """
    windows = []
    for symbol in sorted(days_by_symbol):
        days = days_by_symbol[symbol]
        n = len(days)
        if n < lookback + 2:
            logger.info("build_windows: %s has %d days, needs %d; skipped",
                        symbol, n, lookback + 2)
            continue
        price_ratios = np.empty((n - 1, 3))
        gap_ok = np.empty(n - 1, dtype=bool)
        for i in range(1, n):
            gap_ok[i - 1] = (days[i].date - days[i - 1].date).days <= max_gap_days
            for j, name in enumerate(("adj_close", "high", "low")):
                price_ratios[i - 1, j] = getattr(days[i], name) / getattr(days[i - 1], name)
        sent_ratios, sf = normalize_scores([d.sentiment for d in days])
        act_ratios, af = normalize_scores([d.activity for d in days])
        if report is not None:
            report.score_floors += sf + af

        for t in range(lookback, n - 1):
            # ratio rows t-lookback .. t-1 describe days t-lookback+1 .. t
            lo, hi = t - lookback, t
            if not gap_ok[lo:hi + 1].all():
                logger.info("build_windows: %s %s skipped (calendar gap)",
                            symbol, days[t].date)
                continue
            label = 1 if days[t + 1].adj_close > days[t].adj_close else 0
            windows.append(SampleWindow(
                symbol=symbol,
                target_date=days[t].date,
                price_feats=price_ratios[lo:hi].copy(),
                media_feats=np.stack([sent_ratios[lo:hi], act_ratios[lo:hi]], axis=1),
                label=label,
            ))
    return windows


def cross_sections(windows):
    """Group windows by target date into symbol-sorted DaySections."""
    by_date: dict[dt.date, list[SampleWindow]] = {}
    for w in windows:
        by_date.setdefault(w.target_date, []).append(w)
    sections = []
    for date in sorted(by_date):
        ws = sorted(by_date[date], key=lambda w: w.symbol)
        sections.append(DaySection(
            date=date,
            symbols=[w.symbol for w in ws],
            price=np.stack([w.price_feats for w in ws]),
            media=np.stack([w.media_feats for w in ws]),
            labels=np.array([w.label for w in ws], dtype=np.int64),
        ))
    return sections


def split_dataset(windows, ratios=(0.70, 0.15, 0.15)) -> DatasetSplit:
    """Chronological split by target date; rounding remainder goes to train.

    validation and test each get max(1, floor(ratio * n_dates)) dates.
    """
    sections = cross_sections(windows)
    n = len(sections)
    if n < 3:
        raise SplitError(f"need at least 3 distinct target dates, got {n}")
    n_val = max(1, int(n * ratios[1]))
    n_test = max(1, int(n * ratios[2]))
    n_train = n - n_val - n_test
    if n_train < 1:
        raise SplitError(f"split leaves no training dates for n={n}")
    return DatasetSplit(
        train=sections[:n_train],
        validation=sections[n_train:n_train + n_val],
        test=sections[n_train + n_val:],
    )


# ---------------------------------------------------------------------------
# synthetic data with a planted, analytically known signal


class SynthConfigError(ValueError):
    """Synthetic generator configuration out of range."""


@dataclass
class SynthConfig:
    """Planted-signal market generator settings.

    signal:
      "sentiment": next-day direction follows (sentiment ratio > 1) with
                   probability p; price windows are noise.
      "contagion": stocks form leader/follower pairs joined by a relation.
                   Leaders trend: each next move repeats their previous move
                   with probability 0.7.  A follower's next-day direction
                   copies its leader's previous move with probability p, and
                   follower move sizes are ten times smaller.  Without the
                   relation edge a follower's own history only reflects the
                   leader's trend (~0.7); reading the leader's actual last
                   move requires looking across the edge.
      "none":     directions are fair coin flips.
    """

    n_stocks: int = 20
    n_days: int = 300
    signal: str = "sentiment"
    p: float = 0.8
    start: dt.date = dt.date(2019, 1, 2)
    move_min: float = 0.002
    move_max: float = 0.02

    def validate(self):
        if self.n_stocks < 1 or self.n_days < 3:
            raise SynthConfigError("need n_stocks >= 1 and n_days >= 3")
        if self.signal not in ("sentiment", "contagion", "none"):
            raise SynthConfigError(f"unknown signal {self.signal!r}")
        if not (0.0 <= self.p <= 1.0):
            raise SynthConfigError(f"p={self.p} outside [0, 1]")
        if not (0 < self.move_min <= self.move_max):
            raise SynthConfigError("need 0 < move_min <= move_max")


@dataclass
class SyntheticDataset:
    days_by_symbol: dict
    relations: list          # (subject_entity, property, object_entity, valid_from)
    universe: dict           # ticker -> entity id
    benchmark: list          # MarketDay series for the index proxy
    signal_info: dict


def trading_calendar(start: dt.date, n_days: int):
    """n_days consecutive weekdays from start."""
    dates, d = [], start
    while len(dates) < n_days:
        if d.weekday() < 5:
            dates.append(d)
        d += dt.timedelta(days=1)
    return dates


def _price_path(dirs, mags, rng, n_days):
    """Build OHLC series from per-step directions (len n_days - 1)."""
    close = np.empty(n_days)
    close[0] = rng.uniform(20.0, 200.0)
    for t in range(n_days - 1):
        step = mags[t] if dirs[t] == 1 else -mags[t]
        close[t + 1] = close[t] * (1.0 + step)
    opens = np.empty(n_days)
    opens[0] = close[0] * (1.0 + rng.uniform(-0.002, 0.002))
    for t in range(1, n_days):
        opens[t] = close[t - 1] * (1.0 + rng.uniform(-0.002, 0.002))
    spread = rng.uniform(0.0, 0.004, size=n_days)
    high = np.maximum(opens, close) * (1.0 + spread)
    low = np.minimum(opens, close) * (1.0 - spread)
    return opens, high, low, close


def generate_synthetic(config: SynthConfig, seed: int) -> SyntheticDataset:
    """Reproducible market with a planted rule of known Bayes accuracy."""
    config.validate()
    rng = stream(seed, "synthetic")
    dates = trading_calendar(config.start, config.n_days)
    n, m = config.n_stocks, config.n_days
    symbols = [f"SYM{i:03d}" for i in range(n)]
    universe = {sym: f"E{i:03d}" for i, sym in enumerate(symbols)}

    sentiment = rng.uniform(0.2, 0.8, size=(n, m))
    activity = rng.uniform(10.0, 100.0, size=(n, m))
    flips = rng.random(size=(n, m - 1)) >= config.p
    mags = rng.uniform(config.move_min, config.move_max, size=(n, m - 1))
    coin = rng.integers(0, 2, size=(n, m - 1))

    dirs = np.empty((n, m - 1), dtype=np.int64)
    relations = []
    if config.signal == "sentiment":
        for s in range(n):
            for t in range(m - 1):
                if t >= 1:
                    b = 1 if sentiment[s, t] > sentiment[s, t - 1] else 0
                    dirs[s, t] = 1 - b if flips[s, t] else b
                else:
                    dirs[s, t] = coin[s, t]
        bayes = config.p
    elif config.signal == "contagion":
        # even index = trending leader, odd index = follower copying the
        # leader's previous move; an odd stock count leaves the last one a
        # fair coin-flipper with no pair
        momentum = 0.7
        dirs[:] = coin
        keep = rng.random(size=(n, m - 1)) < momentum
        pairs = 0
        relation_date = dt.date(config.start.year, 1, 1)
        for s in range(0, n - 1, 2):
            pairs += 1
            for t in range(1, m - 1):
                dirs[s, t] = dirs[s, t - 1] if keep[s, t] else 1 - dirs[s, t - 1]
            f = s + 1
            for t in range(1, m - 1):
                b = dirs[s, t - 1]
                dirs[f, t] = 1 - b if flips[f, t] else b
            mags[f] *= 0.1   # followers drift an order of magnitude less
            # dated at the year start so a January 1st snapshot already sees it
            relations.append((universe[symbols[s]], "P127",
                              universe[symbols[f]], relation_date))
        bayes = (momentum * pairs + config.p * pairs + 0.5 * (n - 2 * pairs)) / n
    else:
        dirs = coin
        bayes = 0.5

    days_by_symbol = {}
    for s, sym in enumerate(symbols):
        opens, high, low, close = _price_path(dirs[s], mags[s], rng, m)
        days_by_symbol[sym] = [
            MarketDay(date=dates[t], symbol=sym, adj_close=float(close[t]),
                      high=float(high[t]), low=float(low[t]), open=float(opens[t]),
                      sentiment=float(sentiment[s, t]), activity=float(activity[s, t]))
            for t in range(m)
        ]

    # broad-market proxy for benchmark comparisons: mild upward drift
    bench_dirs = (rng.random(m - 1) < 0.54).astype(np.int64)
    bench_mags = rng.uniform(0.001, 0.01, size=m - 1)
    opens, high, low, close = _price_path(bench_dirs, bench_mags, rng, m)
    benchmark = [
        MarketDay(date=dates[t], symbol="INDEX", adj_close=float(close[t]),
                  high=float(high[t]), low=float(low[t]), open=float(opens[t]),
                  sentiment=0.5, activity=0.0)
        for t in range(m)
    ]

    return SyntheticDataset(
        days_by_symbol=days_by_symbol,
        relations=relations,
        universe=universe,
        benchmark=benchmark,
        signal_info={"signal": config.signal, "p": config.p,
                     "bayes_accuracy": bayes, "n_stocks": n, "n_days": m},
    )
