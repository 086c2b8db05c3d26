"""Breslow baseline hazards and covariate-profile survival curves."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .coxfit import evaluate
from .design import Design, apply_transform, make_design
from .ingest import Dataset
from .model import (
    FIRST_GOAL_TEAM, GAME_LENGTH, GOAL, PROB_WIN, SEASON, TIME_FROM_FIRST_GOAL,
    TIME_OF_FIRST_GOAL, BaselineHazard, ContractError, FitResult, ModelSpec,
)

Z95 = 1.959963984540054
CSV_HEADER = "stratum,time,value,lower,upper"


def stratum_labels(spec: ModelSpec) -> tuple[str, ...]:
    return ("j=1", "j=2") if spec.stratify_by_goal else ("all",)


def frailty_offset(design: Design, fit: FitResult) -> np.ndarray:
    """Per-row ``log z`` of the fitted frailties (zeros without frailty)."""
    if not fit.frailty_values:
        return np.zeros(design.n)
    z = np.array([fit.frailty_values[g] for g in design.game_ids], dtype=float)
    return np.log(z)[design.game]


def fit_ties(fit: FitResult) -> str:
    # the frailty EM works with Breslow increments throughout
    return "breslow" if fit.spec.frailty else fit.spec.ties_method


def breslow_baseline(data: Dataset | Design, spec: ModelSpec | None,
                     fit: FitResult) -> dict[str, BaselineHazard]:
    """Cumulative baseline hazard per stratum, referenced at zero covariates.

    Every stratum label of the spec is present; a stratum without events maps
    to an empty hazard with ``has_events=False``.
    """
    design = data if isinstance(data, Design) else make_design(data, spec or fit.spec)
    if design.spec.terms != fit.spec.terms or design.spec.stratify_by_goal != fit.spec.stratify_by_goal:
        raise ContractError("fit and dataset spec disagree")
    if not fit.converged:
        raise ContractError("baseline requested for a fit that did not converge")
    design = design.with_offset(frailty_offset(design, fit))
    beta = fit.beta
    ev = evaluate(design, beta, ties=fit_ties(fit), order=1)
    cov = np.asarray(fit.covariance, dtype=float).reshape(design.p, design.p)
    out = {}
    for code, label in enumerate(stratum_labels(design.spec)):
        sel = design.ev_stratum == code
        out[label] = BaselineHazard(
            stratum=label, times=design.ev_time[sel].copy(), jumps=ev.jump[sel].copy(),
            jump_sq=ev.jump_sq[sel].copy(), score_terms=ev.score_terms[sel].copy(),
            beta=beta.copy(), covariance=cov, reference=np.zeros(design.p),
            has_events=bool(sel.any()))
    return out


def hazard_band(baseline: BaselineHazard) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise 95% band of the step function on the log scale."""
    H = baseline.cumulative_hazard
    with np.errstate(divide="ignore", invalid="ignore"):
        se_log = np.sqrt(np.maximum(baseline.variance, 0.0)) / H
    return H * np.exp(-Z95 * se_log), H * np.exp(Z95 * se_log)


# ----------------------------------------------------------------- profiles

@dataclass(frozen=True)
class SurvivalProfile:
    """Covariates of one curve; giving ``time_of_first_goal`` makes it a j=2 curve."""

    prob_win: float
    season: int = 0
    time_of_first_goal: float | None = None
    first_goal_team: bool | None = None

    def __post_init__(self):
        if not 0.0 <= self.prob_win <= 1.0:
            raise ContractError("profile prob_win must lie in [0, 1]")
        if self.time_of_first_goal is not None and not 0 <= self.time_of_first_goal < GAME_LENGTH:
            raise ContractError("profile time_of_first_goal must lie in [0, 90)")

    @property
    def second_goal(self) -> bool:
        return self.time_of_first_goal is not None

    @property
    def entry(self) -> float:
        return float(self.time_of_first_goal) if self.second_goal else 0.0

    def label(self) -> str:
        parts = [f"pw={self.prob_win:g}", f"season={self.season}"]
        if self.second_goal:
            parts.append(f"tfg={self.time_of_first_goal:g}")
            parts.append(f"fgt={int(bool(self.first_goal_team))}")
        return ";".join(parts)

    def covariates(self, spec: ModelSpec, t) -> np.ndarray:
        """``(len(t), p)`` covariate values at times ``t``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        j2 = self.second_goal
        tfg = self.entry
        cols = {
            PROB_WIN: np.full(t.shape, float(self.prob_win)),
            SEASON: np.full(t.shape, float(self.season)),
            GOAL: np.full(t.shape, float(j2)),
            TIME_OF_FIRST_GOAL: np.full(t.shape, tfg if j2 else 0.0),
            FIRST_GOAL_TEAM: np.full(t.shape, float(bool(self.first_goal_team)) if j2 else 0.0),
            TIME_FROM_FIRST_GOAL: (apply_transform(t - tfg, 1 if spec.time_transform == "log" else 0)
                                   if j2 else np.zeros(t.shape)),
        }
        if not spec.terms:
            return np.zeros((t.size, 0))
        return np.column_stack([cols[k] for k in spec.terms])


@dataclass(frozen=True)
class SurvivalCurve:
    profile: SurvivalProfile
    stratum: str
    times: np.ndarray
    survival: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    @property
    def points(self) -> list[tuple[float, float, float, float]]:
        return list(zip(self.times.tolist(), self.survival.tolist(), self.lower.tolist(),
                        self.upper.tolist()))

    def at(self, t: float) -> float:
        idx = np.searchsorted(self.times, t, side="right") - 1
        if idx < 0:
            raise ContractError(f"time {t} precedes the curve's entry {self.times[0]}")
        return float(self.survival[idx])


def survival_curve(fit: FitResult, baselines: dict[str, BaselineHazard] | BaselineHazard,
                   profile: SurvivalProfile, until: float = GAME_LENGTH) -> SurvivalCurve:
    """``S(t) = exp(-sum_s dH0(s) exp((x(s) - ref) b))`` over jumps after the entry time.

    The band comes from the delta-method variance of the profile's cumulative
    hazard, formed on the log scale and mapped back.
    """
    if until > GAME_LENGTH:
        raise ContractError(f"curves end at minute {GAME_LENGTH}; got {until}")
    spec = fit.spec
    if isinstance(baselines, BaselineHazard):
        base = baselines
    else:
        label = ("j=2" if profile.second_goal else "j=1") if spec.stratify_by_goal else "all"
        base = baselines[label]
    if not base.has_events:
        raise ContractError(f"stratum {base.stratum} has no events")
    entry = profile.entry
    keep = (base.times > entry) & (base.times <= until)
    ts = base.times[keep]
    h = base.jumps[keep]
    x = profile.covariates(spec, ts) - base.reference
    w = np.exp(x @ base.beta) if spec.terms else np.ones(ts.size)
    H = np.cumsum(w * h)
    grad = np.cumsum(w[:, None] * (h[:, None] * x - base.score_terms[keep]), axis=0)
    var = np.cumsum(w ** 2 * base.jump_sq[keep])
    if spec.terms:
        var = var + np.einsum("ti,ij,tj->t", grad, base.covariance, grad)
    with np.errstate(divide="ignore", invalid="ignore"):
        se_log = np.where(H > 0, np.sqrt(np.maximum(var, 0.0)) / H, 0.0)
    surv = np.exp(-H)
    lower = np.clip(np.exp(-H * np.exp(Z95 * se_log)), 0.0, 1.0)
    upper = np.clip(np.exp(-H * np.exp(-Z95 * se_log)), 0.0, 1.0)
    return SurvivalCurve(profile=profile, stratum=base.stratum,
                         times=np.concatenate([[entry], ts]),
                         survival=np.concatenate([[1.0], surv]),
                         lower=np.concatenate([[1.0], lower]),
                         upper=np.concatenate([[1.0], upper]))


# ------------------------------------------------------------------ export

def _fmt(x: float) -> str:
    return repr(float(x)) if math.isfinite(x) else ""


def baselines_csv(baselines: dict[str, BaselineHazard], comment: str | None = None) -> str:
    buf = io.StringIO()
    if comment:
        buf.write(f"# {comment}\n")
    buf.write("# cumulative baseline hazard at zero covariates; band is 95% on the log scale\n")
    buf.write(CSV_HEADER + "\n")
    w = csv.writer(buf, lineterminator="\n")
    for label, base in baselines.items():
        lo, hi = hazard_band(base)
        for t, H, a, b in zip(base.times, base.cumulative_hazard, lo, hi):
            w.writerow([label, _fmt(t), _fmt(H), _fmt(a), _fmt(b)])
    return buf.getvalue()


def curves_csv(curves: list[SurvivalCurve], comment: str | None = None) -> str:
    buf = io.StringIO()
    if comment:
        buf.write(f"# {comment}\n")
    buf.write(CSV_HEADER + "\n")
    w = csv.writer(buf, lineterminator="\n")
    for c in curves:
        for t, s, a, b in c.points:
            w.writerow([c.profile.label(), _fmt(t), _fmt(s), _fmt(a), _fmt(b)])
    return buf.getvalue()
