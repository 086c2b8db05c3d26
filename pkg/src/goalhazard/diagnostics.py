"""Martingale and deviance residuals, and effect arithmetic on fitted coefficients."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .baseline import fit_ties, frailty_offset
from .coxfit import evaluate
from .design import Design, make_design
from .ingest import Dataset
from .model import ContractError, FitResult, ModelSpec


@dataclass(frozen=True)
class Residuals:
    game_ids: tuple[str, ...]
    goal_index: np.ndarray
    event: np.ndarray
    prob_win: np.ndarray
    time_of_first_goal: np.ndarray   # nan on j=1 rows
    martingale: np.ndarray
    deviance: np.ndarray


def martingale_residuals(data: Dataset | Design, spec: ModelSpec | None,
                         fit: FitResult) -> np.ndarray:
    """``delta - H_hat`` per row, with the hazard accumulated over ``(entry, exit]``.

    Under Efron ties an event row's own event time contributes the
    tie-averaged increment it was given in the likelihood, which makes the
    residuals sum to zero exactly.
    """
    design = data if isinstance(data, Design) else make_design(data, spec or fit.spec)
    design = design.with_offset(frailty_offset(design, fit))
    ev = evaluate(design, fit.beta, ties=fit_ties(fit), order=0)
    H = _kernels.row_cumhaz(design, fit.beta, ev.jump, ev.jump_tied)
    return design.event.astype(float) - H


def deviance_residuals(martingale, event) -> np.ndarray:
    """``sign(r) sqrt(-2 [r + delta log(delta - r)])``."""
    r = np.asarray(martingale, dtype=float)
    d = np.asarray(event, dtype=float)
    if r.shape != d.shape:
        raise ContractError("residual and event arrays differ in length")
    bad = np.flatnonzero(r > d + 1e-12)
    if bad.size:
        raise ContractError(f"martingale residual {r[bad[0]]:g} exceeds its event flag at row {bad[0]}")
    # r = delta is only reachable with zero hazard; the log term then vanishes
    with np.errstate(divide="ignore", invalid="ignore"):
        log_term = np.where(d > 0, d * np.log(np.maximum(d - r, 1e-300)), 0.0)
        inner = -2.0 * (r + log_term)
        # delta = 1 and small r: -2[r + log(1 - r)] = r^2 (1 + 2r/3 + r^2/2 + ...)
        small = (d == 1) & (np.abs(r) < 1e-3)
        series = r * np.sqrt(1 + 2 * r / 3 + r * r / 2 + 2 * r ** 3 / 5)
    return np.where(small, series, np.sign(r) * np.sqrt(np.maximum(inner, 0.0)))


def residuals(dataset: Dataset, spec: ModelSpec | None, fit: FitResult) -> Residuals:
    design = make_design(dataset, spec or fit.spec)
    mart = martingale_residuals(design, None, fit)
    tfg = np.array([r.time_of_first_goal if r.goal_index == 2 else np.nan for r in dataset.rows])
    return Residuals(game_ids=tuple(r.game_id for r in dataset.rows),
                     goal_index=design.goal_index.copy(), event=design.event.copy(),
                     prob_win=np.array([r.prob_win for r in dataset.rows]),
                     time_of_first_goal=tfg, martingale=mart,
                     deviance=deviance_residuals(mart, design.event))


def residuals_csv(res: Residuals, comment: str | None = None) -> str:
    buf = io.StringIO()
    if comment:
        buf.write(f"# {comment}\n")
    buf.write("game_id,j,martingale,deviance\n")
    w = csv.writer(buf, lineterminator="\n")
    for row in zip(res.game_ids, res.goal_index, res.martingale, res.deviance):
        w.writerow([row[0], int(row[1]), repr(float(row[2])), repr(float(row[3]))])
    return buf.getvalue()


def scatter_csv(res: Residuals, comment: str | None = None) -> str:
    """Deviance residuals keyed by ProbWin (every row) and TimeOfFirstGoal (j=2 rows)."""
    buf = io.StringIO()
    if comment:
        buf.write(f"# {comment}\n")
    buf.write("panel,x,deviance,game_id,j\n")
    w = csv.writer(buf, lineterminator="\n")
    for g, j, pw, d in zip(res.game_ids, res.goal_index, res.prob_win, res.deviance):
        w.writerow(["ProbWin", repr(float(pw)), repr(float(d)), g, int(j)])
    for g, j, t, d in zip(res.game_ids, res.goal_index, res.time_of_first_goal, res.deviance):
        if j == 2:
            w.writerow(["TimeOfFirstGoal", repr(float(t)), repr(float(d)), g, int(j)])
    return buf.getvalue()


# -------------------------------------------------------------- effect sizes

def _finite(*xs):
    for x in xs:
        if not math.isfinite(x):
            raise ContractError("inputs must be finite")


def immediate_effect(beta_goal: float, beta_time_of_first_goal: float, t_first: float) -> float:
    """Hazard multiplier right after a first goal scored at ``t_first``."""
    _finite(beta_goal, beta_time_of_first_goal, t_first)
    if beta_time_of_first_goal == 0:
        return math.exp(beta_goal)
    cross = crossover_minute(beta_goal, beta_time_of_first_goal)
    if not math.isfinite(cross):
        return math.exp(beta_goal + beta_time_of_first_goal * t_first)
    # factored around the crossover so the neutral minute maps to exactly 1
    return math.exp(beta_time_of_first_goal * (t_first - cross))


def crossover_minute(beta_goal: float, beta_time_of_first_goal: float) -> float:
    """First-goal minute at which the immediate effect is neutral."""
    _finite(beta_goal, beta_time_of_first_goal)
    if beta_time_of_first_goal == 0:
        raise ContractError("TimeOfFirstGoal coefficient is zero: no crossover minute")
    return -beta_goal / beta_time_of_first_goal


def elapsed_effect(beta_log_elapsed: float, minutes_since_goal: float) -> float:
    _finite(beta_log_elapsed, minutes_since_goal)
    if minutes_since_goal <= 0:
        raise ContractError("minutes since the first goal must be positive")
    return math.exp(beta_log_elapsed * math.log(minutes_since_goal))


def probwin_ratio(beta_probwin: float, delta_probwin: float) -> float:
    _finite(beta_probwin, delta_probwin)
    return math.exp(beta_probwin * delta_probwin)
