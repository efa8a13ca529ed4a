"""Episode persistence and reshaping into analysis inputs.

Episode files are newline-delimited: a format marker, a session header line,
a column header, then one comma-separated row per week. The column order is
fixed and documented in COLUMNS. Integers round-trip exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .flowsim import EpisodeRecord, WeekRow

FORMAT_MARKER = "#episode v1"

COLUMNS = (
    "week", "agent", "inv", "dem_hc1", "dem_hc2", "blg", "shp", "oor",
    "suggestion", "order", "ship_hc1", "ship_hc2",
    "holding", "stockout", "revenue", "profit", "alloc",
)

STATE_COLUMNS = ("inv", "dem_hc1", "dem_hc2", "blg", "shp", "oor")


class TelemetryError(Exception):
    pass


def dumps_episode(ep: EpisodeRecord) -> str:
    lines = [FORMAT_MARKER]
    truth = ep.truth if ep.truth is not None else "-"
    lines.append(
        f"player_id={ep.player_id} condition={ep.condition} seed={ep.seed} truth={truth}"
    )
    lines.append(",".join(COLUMNS))
    for r in ep.weeks:
        lines.append(
            f"{r.week},{r.agent},{r.inv},{r.dem_hc1},{r.dem_hc2},{r.blg},{r.shp},"
            f"{r.oor},{r.suggestion},{r.order},{r.ship_hc1},{r.ship_hc2},"
            f"{r.holding},{r.stockout},{r.revenue},{r.profit},{r.alloc}"
        )
    return "\n".join(lines) + "\n"


def loads_episode(text: str) -> EpisodeRecord:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != FORMAT_MARKER:
        raise TelemetryError("not an episode file")
    header = dict(kv.split("=", 1) for kv in lines[1].split())
    truth = header.get("truth", "-")
    rows: List[WeekRow] = []
    for ln in lines[3:]:
        parts = ln.split(",")
        if len(parts) != len(COLUMNS):
            raise TelemetryError(f"bad row: {ln!r}")
        ints = [int(p) for p in parts[2:16]]
        rows.append(
            WeekRow(
                week=int(parts[0]), agent=parts[1],
                inv=ints[0], dem_hc1=ints[1], dem_hc2=ints[2], blg=ints[3],
                shp=ints[4], oor=ints[5], suggestion=ints[6], order=ints[7],
                ship_hc1=ints[8], ship_hc2=ints[9], holding=ints[10],
                stockout=ints[11], revenue=ints[12], profit=ints[13],
                alloc=parts[16],
            )
        )
    start = rows[0].week if rows else 0
    return EpisodeRecord(
        player_id=header["player_id"],
        condition=header["condition"],
        seed=int(header["seed"]),
        truth=None if truth == "-" else truth,
        start_week=start,
        weeks=rows,
    )


def write_episode(ep: EpisodeRecord, path) -> None:
    Path(path).write_text(dumps_episode(ep))


def read_episode(path) -> EpisodeRecord:
    return loads_episode(Path(path).read_text())


def filter_outliers(episodes: Sequence[EpisodeRecord]) -> Tuple[List[EpisodeRecord], List[EpisodeRecord]]:
    """Single-pass removal of episodes with total profit outside mean +/- 3 sd.

    The standard deviation is the population sd over all totals; the pass is
    not re-iterated on the kept set.
    """
    if len(episodes) < 2:
        raise TelemetryError("need at least 2 episodes")
    totals = np.array([ep.total_profit() for ep in episodes], dtype=float)
    mean = totals.mean()
    sd = totals.std()
    kept, removed = [], []
    for ep, t in zip(episodes, totals):
        if sd > 0 and abs(t - mean) > 3 * sd:
            removed.append(ep)
        else:
            kept.append(ep)
    return kept, removed


@dataclass
class StateMatrix:
    """Pooled (player, week) rows of the six standardized state parameters."""

    data: np.ndarray  # (n_rows, 6) z-scored
    column_means: np.ndarray
    column_stddevs: np.ndarray
    zero_variance: List[str]
    row_index: List[Tuple[str, int]]  # (player_id, week)
    columns: Tuple[str, ...] = STATE_COLUMNS

    @property
    def n_rows(self) -> int:
        return self.data.shape[0]


def build_state_matrix(episodes: Sequence[EpisodeRecord]) -> StateMatrix:
    """Stack per-week state tuples and z-score each column over the pooled rows.

    Uses the population stddev. Zero-variance columns are emitted as zeros and
    flagged rather than producing NaNs.
    """
    if not episodes:
        raise TelemetryError("no episodes")
    horizons = {ep.horizon() for ep in episodes}
    if len(horizons) != 1:
        raise TelemetryError("episodes must share one horizon")
    raw = []
    index = []
    for ep in episodes:
        for r in ep.weeks:
            raw.append([r.inv, r.dem_hc1, r.dem_hc2, r.blg, r.shp, r.oor])
            index.append((ep.player_id, r.week))
    X = np.array(raw, dtype=float)
    if not np.all(np.isfinite(X)):
        raise TelemetryError("non-finite state values")
    means = X.mean(axis=0)
    stds = X.std(axis=0)
    flagged = [STATE_COLUMNS[j] for j in range(X.shape[1]) if stds[j] == 0.0]
    safe = np.where(stds == 0.0, 1.0, stds)
    Z = (X - means) / safe
    Z[:, stds == 0.0] = 0.0
    return StateMatrix(Z, means, stds, flagged, index)


@dataclass
class DeviationSequences:
    """Per-player deviation series, pooled z-normalized."""

    players: List[str]
    sequences: np.ndarray  # (n_players, horizon) normalized
    raw: np.ndarray  # same shape, order - suggestion
    pooled_mean: float
    pooled_stddev: float
    weeks: List[int]


def build_deviation_sequences(episodes: Sequence[EpisodeRecord]) -> DeviationSequences:
    if not episodes:
        raise TelemetryError("no episodes")
    horizons = {ep.horizon() for ep in episodes}
    if len(horizons) != 1:
        raise TelemetryError("episodes must share one horizon")
    raw = np.array([[r.order - r.suggestion for r in ep.weeks] for ep in episodes], dtype=float)
    mean = raw.mean()
    sd = raw.std()
    if sd == 0.0:
        raise TelemetryError("no behavioral signal: all deviations identical")
    return DeviationSequences(
        players=[ep.player_id for ep in episodes],
        sequences=(raw - mean) / sd,
        raw=raw,
        pooled_mean=float(mean),
        pooled_stddev=float(sd),
        weeks=[r.week for r in episodes[0].weeks],
    )


def format_float(x: float) -> str:
    """12 significant digit decimal rendering used by all CSV exports."""
    if x == int(x) and abs(x) < 1e12:
        return str(int(x))
    return f"{x:.12g}"


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(format_float(v) if isinstance(v, float) else str(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")
