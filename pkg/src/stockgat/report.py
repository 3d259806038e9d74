"""Report rendering: delimited outputs plus matplotlib figures on disk."""

from __future__ import annotations

import csv
import json
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def write_predictions_csv(path, records) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "symbol", "probability", "label"])
        for r in records:
            writer.writerow([r.date.isoformat(), r.symbol,
                             repr(r.probability), r.true_label])


def write_metrics_json(path, f1: float, accuracy: float, mcc_value: float) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"f1": f1, "accuracy": accuracy, "mcc": mcc_value},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_backtest_report(out_dir, report) -> None:
    """Time-series CSV, summary text, and the cumulative-return figure."""
    csv_path = os.path.join(out_dir, "backtest_curve.csv")
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "strategy_cum_return", "benchmark_cum_return"])
        for date, s, b in zip(report.dates, report.strategy_cum, report.benchmark_cum):
            writer.writerow([date.isoformat(), repr(s), repr(b)])

    with open(os.path.join(out_dir, "backtest_summary.txt"), "w", encoding="utf-8") as fh:
        fh.write(report.summary() + "\n")

    fig, ax = plt.subplots(figsize=(8, 4.5))
    ax.plot(report.dates, [100 * v for v in report.strategy_cum], label="strategy")
    ax.plot(report.dates, [100 * v for v in report.benchmark_cum],
            label="benchmark", linestyle="--")
    ax.set_xlabel("date")
    ax.set_ylabel("cumulative return (%)")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.autofmt_xdate()
    fig.tight_layout()
    fig.savefig(os.path.join(out_dir, "backtest_curve.png"), dpi=120)
    plt.close(fig)


def write_history_figure(path, history) -> None:
    """Training loss and validation F1 over epochs."""
    epochs = [r.epoch for r in history]
    fig, ax_loss = plt.subplots(figsize=(8, 4.5))
    ax_loss.plot(epochs, [r.train_loss for r in history], color="tab:blue",
                 label="train loss")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("train loss", color="tab:blue")
    ax_f1 = ax_loss.twinx()
    ax_f1.plot(epochs, [r.val_f1 for r in history], color="tab:orange",
               label="val F1")
    ax_f1.set_ylabel("validation F1", color="tab:orange")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
