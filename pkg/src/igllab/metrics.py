"""Per-step metric rows shared by the drivers and the CLI.

The CSV schema is a stable contract: columns appear exactly in
``METRIC_COLUMNS`` order. Fields without a defined value (no ground truth,
no oracle) serialize as empty strings.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Iterator, TextIO

METRIC_COLUMNS = (
    "step",
    "pseudo_reward",
    "true_reward",
    "frac_neg",
    "frac_zero",
    "frac_pos",
    "ik_posterior",
    "ik_top1_acc",
    "cum_regret",
)


@dataclass
class StepMetrics:
    step: int
    pseudo_reward: float
    true_reward: int | None
    frac_neg: float | None
    frac_zero: float | None
    frac_pos: float | None
    ik_posterior: float | None
    ik_top1_acc: float | None
    cum_regret: float | None

    def as_row(self) -> list:
        def cell(v):
            return "" if v is None else repr(v) if isinstance(v, float) else v

        return [cell(getattr(self, name)) for name in METRIC_COLUMNS]


class MetricsAccumulator:
    """Running reward-state fractions, top-1 hit rate, cumulative regret."""

    def __init__(self) -> None:
        self.step = 0
        self.counts = {-1: 0, 0: 0, 1: 0}
        self.truth_steps = 0
        self.top1_hits = 0
        self.cum_regret: float | None = None

    def update(
        self,
        pseudo_reward: float,
        true_reward: int | None,
        ik_posterior: float | None,
        top1_correct: bool | None,
        regret_delta: float | None,
    ) -> StepMetrics:
        self.step += 1
        if top1_correct is not None:
            self.top1_hits += int(top1_correct)
        if true_reward is not None:
            self.counts[true_reward] += 1
            self.truth_steps += 1
        if regret_delta is not None:
            self.cum_regret = (self.cum_regret or 0.0) + regret_delta
        if self.truth_steps:
            frac_neg = self.counts[-1] / self.truth_steps
            frac_zero = self.counts[0] / self.truth_steps
            frac_pos = self.counts[1] / self.truth_steps
        else:
            frac_neg = frac_zero = frac_pos = None
        return StepMetrics(
            step=self.step,
            pseudo_reward=pseudo_reward,
            true_reward=true_reward,
            frac_neg=frac_neg,
            frac_zero=frac_zero,
            frac_pos=frac_pos,
            ik_posterior=ik_posterior,
            ik_top1_acc=None if ik_posterior is None else self.top1_hits / self.step,
            cum_regret=self.cum_regret,
        )


def write_metrics_csv(sink: TextIO, rows: Iterable[StepMetrics]) -> int:
    writer = csv.writer(sink)
    writer.writerow(METRIC_COLUMNS)
    n = 0
    for row in rows:
        writer.writerow(row.as_row())
        n += 1
    return n


def read_metrics_csv(source: TextIO) -> Iterator[dict]:
    """Rows as dicts of floats (None for empty cells); header is checked."""
    reader = csv.reader(source)
    header = next(reader, None)
    if header is None or tuple(header) != METRIC_COLUMNS:
        raise ValueError(
            f"metrics header mismatch: expected {list(METRIC_COLUMNS)}, got {header}"
        )
    for raw in reader:
        yield {
            name: (None if cell == "" else float(cell))
            for name, cell in zip(METRIC_COLUMNS, raw)
        }


def final_window_fractions(
    rows: list[StepMetrics], window: float = 0.1
) -> dict[str, float]:
    """Reward-state fractions over the trailing ``window`` share of steps."""
    if not rows:
        raise ValueError("no metric rows")
    start = int(len(rows) * (1.0 - window))
    tail = rows[start:]
    counts = {-1: 0, 0: 0, 1: 0}
    known = 0
    for r in tail:
        if r.true_reward is not None:
            counts[r.true_reward] += 1
            known += 1
    if known == 0:
        raise ValueError("no ground-truth rewards in the final window")
    return {
        "frac_neg": counts[-1] / known,
        "frac_zero": counts[0] / known,
        "frac_pos": counts[1] / known,
    }


def convergence_step(
    rows: list[StepMetrics], target: float = 0.7, min_steps: int = 0
) -> int | None:
    """First step whose running positive fraction exceeds ``target``.

    ``min_steps`` skips the first rounds, where the running mean over a
    handful of draws crosses any threshold by luck.
    """
    for r in rows:
        if r.step < min_steps:
            continue
        if r.frac_pos is not None and r.frac_pos > target:
            return r.step
    return None
