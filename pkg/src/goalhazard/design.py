"""Array form of a dataset under a model spec, as consumed by the kernels."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .ingest import Dataset
from .model import (
    FIRST_GOAL_TEAM, GOAL, PROB_WIN, SEASON, TIME_FROM_FIRST_GOAL, TIME_OF_FIRST_GOAL,
    ContractError, ModelSpec,
)

TRANSFORM_CODES = {"identity": 0, "log": 1}


@dataclass(frozen=True)
class Design:
    """Counting-process rows plus the covariate layout of one spec.

    The time-dependent column (if any) holds an additive base value for every
    row; at event time ``t`` a second-goal row adds ``td_scale * g(t - tfirst)``
    to it. The base is zero for data built from a dataset, which keeps the
    term switched off on first-goal rows.
    """

    spec: ModelSpec
    game_ids: tuple[str, ...]
    game: np.ndarray          # int64 game index per row
    entry: np.ndarray
    exit: np.ndarray
    event: np.ndarray         # int64 0/1
    stratum: np.ndarray       # int64
    X: np.ndarray             # (n, p) float64
    offset: np.ndarray
    td_col: int
    td_scale: float
    tfirst: np.ndarray
    is_j2: np.ndarray         # int64 0/1
    transform: int
    ev_time: np.ndarray       # distinct (stratum, time) pairs carrying events
    ev_stratum: np.ndarray
    ev_count: np.ndarray      # events at each (stratum, time) pair
    goal_index: np.ndarray

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def n_games(self) -> int:
        return len(self.game_ids)

    def with_offset(self, offset: np.ndarray) -> "Design":
        return replace(self, offset=np.ascontiguousarray(offset, dtype=np.float64))

    def with_columns(self, X: np.ndarray, td_scale: float | None = None) -> "Design":
        return replace(self, X=np.ascontiguousarray(X, dtype=np.float64),
                       td_scale=self.td_scale if td_scale is None else float(td_scale))

    def covariates_at(self, rows: np.ndarray, t: float) -> np.ndarray:
        """Covariate matrix of ``rows`` evaluated at time ``t``."""
        x = self.X[rows].copy()
        if self.td_col >= 0:
            j2 = self.is_j2[rows] == 1
            x[j2, self.td_col] += self.td_scale * apply_transform(
                t - self.tfirst[rows][j2], self.transform)
        return x

    def event_linear_predictor(self, beta: np.ndarray) -> np.ndarray:
        """``x(exit) . beta`` (without offset) for every event row."""
        rows = np.flatnonzero(self.event)
        if self.p == 0:
            return np.zeros(rows.size)
        x = self.X[rows].copy()
        if self.td_col >= 0:
            j2 = self.is_j2[rows] == 1
            x[j2, self.td_col] += self.td_scale * apply_transform(
                self.exit[rows][j2] - self.tfirst[rows][j2], self.transform)
        return x @ beta


def apply_transform(u, code: int):
    return np.log(u) if code == 1 else u


def make_design(dataset: Dataset, spec: ModelSpec) -> Design:
    rows = dataset.rows
    if not rows:
        raise ContractError("empty dataset")
    n = len(rows)
    ids = sorted({r.game_id for r in rows})
    index = {g: i for i, g in enumerate(ids)}
    game = np.fromiter((index[r.game_id] for r in rows), dtype=np.int64, count=n)
    entry = np.array([r.entry for r in rows], dtype=np.float64)
    exit_ = np.array([r.exit for r in rows], dtype=np.float64)
    event = np.array([int(r.event) for r in rows], dtype=np.int64)
    j = np.array([r.goal_index for r in rows], dtype=np.int64)
    is_j2 = (j == 2).astype(np.int64)
    tfirst = np.array([r.time_of_first_goal if r.goal_index == 2 else 0.0 for r in rows])
    fgt = np.array([float(bool(r.first_goal_team)) for r in rows])
    columns = {
        PROB_WIN: np.array([r.prob_win for r in rows], dtype=np.float64),
        SEASON: np.array([float(r.season) for r in rows]),
        GOAL: is_j2.astype(np.float64),
        TIME_OF_FIRST_GOAL: is_j2 * tfirst,
        FIRST_GOAL_TEAM: is_j2 * fgt,
        TIME_FROM_FIRST_GOAL: np.zeros(n),
    }
    X = np.ascontiguousarray(np.column_stack([columns[t] for t in spec.terms])
                             if spec.terms else np.zeros((n, 0)))
    td_col = spec.terms.index(TIME_FROM_FIRST_GOAL) if spec.has_time_dependent else -1
    stratum = (j - 1) if spec.stratify_by_goal else np.zeros(n, dtype=np.int64)
    stratum = np.ascontiguousarray(stratum, dtype=np.int64)
    ev_rows = np.flatnonzero(event)
    counts: dict = {}
    for r in ev_rows:
        key = (int(stratum[r]), float(exit_[r]))
        counts[key] = counts.get(key, 0) + 1
    pairs = sorted(counts)
    ev_stratum = np.array([s for s, _ in pairs], dtype=np.int64)
    ev_time = np.array([t for _, t in pairs], dtype=np.float64)
    ev_count = np.array([counts[k] for k in pairs], dtype=np.float64)
    return Design(spec=spec, game_ids=tuple(ids), game=game, entry=entry, exit=exit_,
                  event=event, stratum=stratum, X=X, offset=np.zeros(n), td_col=td_col,
                  td_scale=1.0, tfirst=tfirst, is_j2=is_j2,
                  transform=TRANSFORM_CODES[spec.time_transform],
                  ev_time=ev_time, ev_stratum=ev_stratum, ev_count=ev_count,
                  goal_index=j)
