"""Top-k close-to-open trading strategy, Sharpe ratio, benchmark comparison.

Strategy: on each prediction date, among records with probability above the
positive threshold, buy the k most confident at that day's adjusted close and
sell at the symbol's next trading day's open, equal-weighted.  Days with no
qualifying prediction sit in cash (return 0).
"""

from __future__ import annotations

import datetime as dt
import logging
import math
from dataclasses import dataclass, field

logger = logging.getLogger(__name__)


class UndefinedSharpeError(ValueError):
    """Fewer than two returns, or zero sample variance."""


class DateCoverageError(ValueError):
    """Benchmark series does not cover the backtest dates."""


@dataclass(frozen=True)
class PredictionRecord:
    date: dt.date
    symbol: str
    probability: float
    true_label: int

    def __post_init__(self):
        if not (math.isfinite(self.probability) and 0.0 < self.probability < 1.0):
            raise ValueError(f"probability {self.probability} outside (0, 1)")


@dataclass
class Trade:
    symbol: str
    buy_price: float
    sell_price: float

    @property
    def simple_return(self) -> float:
        return self.sell_price / self.buy_price - 1.0


@dataclass
class BacktestResult:
    dates: list = field(default_factory=list)
    daily_returns: list = field(default_factory=list)
    trade_log: dict = field(default_factory=dict)   # date -> list[Trade]
    skipped: list = field(default_factory=list)     # (date, symbol, reason)

    @property
    def cumulative_return(self) -> float:
        acc = 1.0
        for r in self.daily_returns:
            acc *= 1.0 + r
        return acc - 1.0

    def cumulative_series(self):
        out, acc = [], 1.0
        for r in self.daily_returns:
            acc *= 1.0 + r
            out.append(acc - 1.0)
        return out


def _price_lookup(days_by_symbol):
    """(close, next-open) accessors keyed on (symbol, date)."""
    close, next_open = {}, {}
    for symbol, days in days_by_symbol.items():
        for i, day in enumerate(days):
            close[(symbol, day.date)] = day.adj_close
            if i + 1 < len(days):
                next_open[(symbol, day.date)] = days[i + 1].open
    return close, next_open


def run_strategy(predictions, days_by_symbol, k: int = 4,
                 threshold: float = 0.5, cost_per_trade: float = 0.0) -> BacktestResult:
    """Simulate the top-k strategy over all prediction dates.

    ``predictions`` is a flat iterable of PredictionRecord.  Probability ties
    break lexicographically by symbol.  ``cost_per_trade`` is a fractional
    round-trip cost deducted from each trade's return (default: frictionless).
    """
    by_date: dict[dt.date, list[PredictionRecord]] = {}
    for rec in predictions:
        by_date.setdefault(rec.date, []).append(rec)
    close, next_open = _price_lookup(days_by_symbol)

    result = BacktestResult()
    for date in sorted(by_date):
        qualifiers = [r for r in by_date[date] if r.probability > threshold]
        qualifiers.sort(key=lambda r: (-r.probability, r.symbol))
        trades = []
        for rec in qualifiers[:k]:
            buy = close.get((rec.symbol, date))
            sell = next_open.get((rec.symbol, date))
            if buy is None or sell is None:
                reason = "no close price" if buy is None else "no next-day open"
                logger.warning("backtest: %s %s skipped (%s)", date, rec.symbol, reason)
                result.skipped.append((date, rec.symbol, reason))
                continue
            trades.append(Trade(rec.symbol, buy, sell))
        daily = (sum(t.simple_return - cost_per_trade for t in trades) / len(trades)
                 if trades else 0.0)
        result.dates.append(date)
        result.daily_returns.append(daily)
        result.trade_log[date] = trades
    return result


def sharpe(daily_returns, periods_per_year: int = 252, risk_free: float = 0.0) -> float:
    """Annualized mean excess return over sample standard deviation."""
    rs = [r - risk_free / periods_per_year for r in daily_returns]
    n = len(rs)
    if n < 2:
        raise UndefinedSharpeError(f"need at least 2 returns, got {n}")
    mean = sum(rs) / n
    var = sum((r - mean) ** 2 for r in rs) / (n - 1)
    if var == 0.0:
        raise UndefinedSharpeError("zero sample variance in daily returns")
    return mean / math.sqrt(var) * math.sqrt(periods_per_year)


@dataclass
class BenchmarkReport:
    """Strategy vs buy-the-index rows plus a plot-ready cumulative series."""

    dates: list
    strategy_cum: list
    benchmark_cum: list
    rows: dict   # name -> {"cumulative_return": float, "sharpe": float | None,
                 #          "sharpe_error": str | None}

    def summary(self) -> str:
        lines = [f"{'Model':<12} {'Cumulative Return':>18} {'Sharpe Ratio':>14}"]
        for name, row in self.rows.items():
            sr = (f"{row['sharpe']:.2f}" if row["sharpe"] is not None
                  else f"n/a ({row['sharpe_error']})")
            lines.append(f"{name:<12} {row['cumulative_return'] * 100:>17.2f}% {sr:>14}")
        return "\n".join(lines)


def _row(daily_returns) -> dict:
    acc = 1.0
    for r in daily_returns:
        acc *= 1.0 + r
    row = {"cumulative_return": acc - 1.0, "sharpe": None, "sharpe_error": None}
    try:
        row["sharpe"] = sharpe(daily_returns)
    except UndefinedSharpeError as exc:
        row["sharpe_error"] = str(exc)
    return row


def compare_benchmark(result: BacktestResult, benchmark_days) -> BenchmarkReport:
    """Benchmark the strategy against holding the index over the same dates.

    The benchmark uses the same close-to-next-open convention as the strategy.
    """
    bench = {"INDEX": list(benchmark_days)} if not isinstance(benchmark_days, dict) \
        else benchmark_days
    symbol = next(iter(bench))
    close, next_open = _price_lookup(bench)

    bench_returns = []
    for date in result.dates:
        buy = close.get((symbol, date))
        sell = next_open.get((symbol, date))
        if buy is None or sell is None:
            raise DateCoverageError(f"benchmark series does not cover {date}")
        bench_returns.append(sell / buy - 1.0)

    strat_cum, bench_cum, sa, ba = [], [], 1.0, 1.0
    for r_s, r_b in zip(result.daily_returns, bench_returns):
        sa *= 1.0 + r_s
        ba *= 1.0 + r_b
        strat_cum.append(sa - 1.0)
        bench_cum.append(ba - 1.0)

    return BenchmarkReport(
        dates=list(result.dates),
        strategy_cum=strat_cum,
        benchmark_cum=bench_cum,
        rows={"strategy": _row(result.daily_returns),
              "benchmark": _row(bench_returns)},
    )
