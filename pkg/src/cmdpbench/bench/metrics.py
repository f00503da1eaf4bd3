"""Per-epoch metrics (episode return, episodic cost, cost rate), CSV I/O and
cross-seed summaries."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

CSV_COLUMNS = ("epoch", "steps", "J_r", "M_c", "rho_c", "kl", "multiplier")
SUMMARY_COLUMNS = ("algorithm", "J_r", "M_c", "rho_c")
STEP_LOG_COLUMNS = ("epoch", "episode", "t", "reward", "cost")


@dataclass
class MetricsRow:
    epoch: int
    steps: int  # cumulative environment steps
    J_r: float
    M_c: float
    rho_c: float
    kl: float = 0.0
    multiplier: float = 0.0
    carried: bool = False  # no completed episode this epoch; J_r/M_c carried forward

    def as_csv(self) -> list[str]:
        return [str(self.epoch), str(self.steps)] + [
            repr(float(getattr(self, k))) for k in CSV_COLUMNS[2:]]


@dataclass
class CostCounter:
    cost: float = 0.0
    steps: int = 0


def compute_metrics(epoch: int, episode_returns: Sequence[float], episode_costs: Sequence[float],
                    epoch_cost: float, epoch_steps: int, counter: CostCounter,
                    previous: MetricsRow | None = None, kl: float = 0.0,
                    multiplier: float = 0.0) -> MetricsRow:
    """Episode means over completed episodes; ``rho_c`` is cumulative cost per
    cumulative step since the start of training. ``counter`` is updated."""
    counter.cost = counter.cost + epoch_cost
    counter.steps += epoch_steps
    rho = counter.cost / counter.steps if counter.steps else 0.0
    if episode_returns:
        j_r = math.fsum(episode_returns) / len(episode_returns)
        m_c = math.fsum(episode_costs) / len(episode_costs)
        carried = False
    else:
        j_r = previous.J_r if previous else float("nan")
        m_c = previous.M_c if previous else float("nan")
        carried = True
    return MetricsRow(epoch, counter.steps, j_r, m_c, rho, kl, multiplier, carried)


def episode_totals(values: Iterable[float]) -> float:
    return math.fsum(values)


def write_header(path) -> None:
    with Path(path).open("w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerow(CSV_COLUMNS)


def append_row(path, row: MetricsRow | Sequence[str]) -> None:
    cells = row.as_csv() if isinstance(row, MetricsRow) else list(row)
    with Path(path).open("a", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerow(cells)


def read_rows(path) -> list[MetricsRow]:
    rows = []
    with Path(path).open(newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(MetricsRow(int(rec["epoch"]), int(rec["steps"]), float(rec["J_r"]),
                                   float(rec["M_c"]), float(rec["rho_c"]), float(rec["kl"]),
                                   float(rec["multiplier"])))
    return rows


def emit_summary(rows_by_algorithm: dict[str, Sequence[Sequence[MetricsRow]]], path=None,
                 expected_seeds: int | None = None) -> list[tuple]:
    """Final-epoch metrics averaged across seeds, one line per algorithm.

    Columns: algorithm, J_r, M_c, rho_c. Raises if a seed has no rows or fewer
    seeds than ``expected_seeds`` are present.
    """
    table = []
    for algo, per_seed in rows_by_algorithm.items():
        if expected_seeds is not None and len(per_seed) < expected_seeds:
            raise ValueError(f"{algo}: {expected_seeds - len(per_seed)} seed(s) missing")
        finals = []
        for i, rows in enumerate(per_seed):
            if not rows:
                raise ValueError(f"{algo}: seed #{i} has no rows")
            finals.append(rows[-1])
        n = len(finals)
        table.append((algo, math.fsum(r.J_r for r in finals) / n,
                      math.fsum(r.M_c for r in finals) / n,
                      math.fsum(r.rho_c for r in finals) / n))
    if path is not None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SUMMARY_COLUMNS)
            for algo, jr, mc, rho in table:
                w.writerow([algo, repr(jr), repr(mc), repr(rho)])
    return table
