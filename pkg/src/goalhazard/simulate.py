"""Synthetic leagues drawn from the fitted hazard models, plus a brute-force oracle.

Home goals follow the model's proportional hazard with a constant baseline
rate; away goals are an independent exponential competing process. After the
first goal the game clock restarts at the *recorded* minute of that goal, so
the simulated second-goal process sees exactly the covariates the dataset
will carry. Goal times are recorded by rounding played time up to a whole
minute.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import optimize

from .ingest import Dataset
from .model import (
    FIRST_GOAL_TEAM, GAME_LENGTH, GOAL, PROB_WIN, SEASON, TIME_FROM_FIRST_GOAL,
    TIME_OF_FIRST_GOAL, ContractError, GoalEvent, MatchRecord, ModelSpec, expand_preset,
)

ROOT_TOL = 1e-9
# bookmaker margin used when turning probabilities back into odds
OVERROUND = 1.05
# share of the non-home-win probability given to the draw
DRAW_SHARE = 0.45


@dataclass(frozen=True)
class SimParams:
    """Generating parameters.

    ``coefficients`` maps term names to values; terms outside ``spec`` are
    ignored and missing ones count as zero. ``away_rate`` is the constant
    per-minute rate of the competing away process, which the models leave
    unspecified. ``stoppage`` adds played minutes to the end of each half;
    goals in them are recorded at minute 45 or 90.
    """

    spec: ModelSpec
    coefficients: Mapping[str, float]
    baseline_rate: float = 0.0058
    away_rate: float = 0.0115
    theta: float = 0.0
    stoppage: tuple[float, float] = (0.0, 0.0)
    prob_win_range: tuple[float, float] = (0.15, 0.8)

    def __post_init__(self):
        if not self.baseline_rate > 0:
            raise ContractError("baseline_rate must be positive")
        if self.away_rate < 0 or self.theta < 0:
            raise ContractError("away_rate and theta must be nonnegative")
        for v in self.coefficients.values():
            if not math.isfinite(v):
                raise ContractError("coefficients must be finite")
        if self.spec.stratify_by_goal:
            raise ContractError("stratified specs have no single generating hazard")
        if self.spec.time_transform == "log" and self.coef(TIME_FROM_FIRST_GOAL) <= -1:
            raise ContractError("log elapsed-time coefficient must exceed -1")
        lo, hi = self.prob_win_range
        if not 0 < lo <= hi < 1:
            raise ContractError("prob_win_range must lie inside (0, 1)")

    def coef(self, term: str) -> float:
        if term not in self.spec.terms:
            return 0.0
        return float(self.coefficients.get(term, 0.0))

    @classmethod
    def from_dict(cls, d: Mapping) -> "SimParams":
        spec = expand_preset(d["model"]) if "model" in d else ModelSpec.from_dict(d["spec"])
        spec = spec.with_(frailty=False)
        coefs = d.get("coefficients", {})
        if isinstance(coefs, (list, tuple)):
            coefs = dict(zip(spec.terms, coefs))
        pw = d.get("prob_win_range", (0.15, 0.8))
        return cls(spec=spec, coefficients=dict(coefs),
                   baseline_rate=float(d.get("baseline_rate", 0.0058)),
                   away_rate=float(d.get("away_rate", 0.0115)),
                   theta=float(d.get("theta", 0.0)),
                   stoppage=tuple(d.get("stoppage", (0.0, 0.0))),
                   prob_win_range=(float(pw[0]), float(pw[1])))


# generating values used when no parameter file is given (roughly the fitted Model VI)
DEFAULT_MODEL = "VI"
DEFAULT_COEFFICIENTS = {PROB_WIN: 1.9, SEASON: 0.15, GOAL: -0.6, TIME_OF_FIRST_GOAL: 0.011,
                        TIME_FROM_FIRST_GOAL: 0.16}


def default_params(**overrides) -> SimParams:
    return SimParams(spec=expand_preset(DEFAULT_MODEL), coefficients=dict(DEFAULT_COEFFICIENTS),
                     **overrides)


def _recorded_minute(played: float, stoppage: tuple[float, float]) -> int:
    extra1, _ = stoppage
    if played <= 45.0:
        return max(1, math.ceil(played))
    if played <= 45.0 + extra1:
        return 45
    return min(GAME_LENGTH, max(46, math.ceil(played - extra1)))


def _odds_for(prob_win: float) -> tuple[float, float, float]:
    probs = (prob_win, (1 - prob_win) * DRAW_SHARE, (1 - prob_win) * (1 - DRAW_SHARE))
    margin = min(OVERROUND, 0.999 / max(probs))
    return tuple(1.0 / (q * margin) for q in probs)


def _elapsed_integral(beta_td: float, transform: str) -> Callable[[float], float]:
    """``G(u) = int_0^u exp(beta_td * g(v)) dv`` for the elapsed-time term."""
    if beta_td == 0.0:
        return lambda u: u
    if transform == "log":
        a = beta_td + 1.0
        return lambda u: u ** a / a
    return lambda u: math.expm1(beta_td * u) / beta_td


def _draw_by_inversion(rng: np.random.Generator, cumhaz: Callable[[float], float],
                       horizon: float) -> float:
    """Event time of a process with increasing cumulative hazard, ``inf`` past ``horizon``."""
    target = rng.exponential()
    if horizon <= 0 or cumhaz(horizon) < target:
        return math.inf
    return optimize.brentq(lambda u: cumhaz(u) - target, 0.0, horizon, xtol=ROOT_TOL)


def simulate_game(params: SimParams, prob_win: float, season: int,
                  rng_seed, game_id: str = "G00000") -> MatchRecord:
    """One game's first two goals; ``rng_seed`` is an int or a ``SeedSequence``."""
    if not 0 < prob_win < 1:
        raise ContractError("prob_win must lie in (0, 1)")
    rng = np.random.default_rng(rng_seed)
    horizon = GAME_LENGTH + sum(params.stoppage)
    z = rng.gamma(1.0 / params.theta, params.theta) if params.theta > 0 else 1.0
    fixed = params.coef(PROB_WIN) * prob_win + params.coef(SEASON) * season
    home_rate = z * params.baseline_rate * math.exp(fixed)

    t_home = rng.exponential(1.0 / home_rate)
    t_away = rng.exponential(1.0 / params.away_rate) if params.away_rate > 0 else math.inf
    first = min(t_home, t_away)
    goals = []
    if first <= horizon:
        home_first = t_home <= t_away
        tilde = _recorded_minute(first, params.stoppage)
        goals.append(GoalEvent(tilde, home_first))
        restart = float(math.ceil(first))
        if tilde < GAME_LENGTH and restart < horizon:
            lin = (fixed + params.coef(GOAL) + params.coef(TIME_OF_FIRST_GOAL) * tilde
                   + params.coef(FIRST_GOAL_TEAM) * float(home_first))
            scale = z * params.baseline_rate * math.exp(lin)
            G = _elapsed_integral(params.coef(TIME_FROM_FIRST_GOAL), params.spec.time_transform)
            left = horizon - restart
            u_home = _draw_by_inversion(rng, lambda u: scale * G(u), left)
            u_away = rng.exponential(1.0 / params.away_rate) if params.away_rate > 0 else math.inf
            u = min(u_home, u_away)
            if u <= left:
                minute = _recorded_minute(restart + u, params.stoppage)
                goals.append(GoalEvent(max(minute, tilde), u_home <= u_away))
    odds_home, odds_draw, odds_away = _odds_for(prob_win)
    return MatchRecord(game_id=game_id, season=season, home_team=f"home-{game_id}",
                       away_team=f"away-{game_id}", goals=tuple(goals), odds_home=odds_home,
                       odds_draw=odds_draw, odds_away=odds_away)


def simulate_league(n_games: int, params: SimParams, seed: int = 0,
                    prob_win_sampler: Callable[[np.random.Generator], float] | None = None,
                    ) -> list[MatchRecord]:
    """``n_games`` independent games; the first half of them form season 0.

    Each game gets its own child of ``SeedSequence(seed)``, so a game's draws
    do not depend on how many games precede it.
    """
    if n_games < 1:
        raise ContractError("n_games must be at least 1")
    lo, hi = params.prob_win_range
    children = np.random.SeedSequence(seed).spawn(n_games)
    width = max(5, len(str(n_games - 1)))
    matches = []
    for i, child in enumerate(children):
        cov_seq, game_seq = child.spawn(2)
        cov_rng = np.random.default_rng(cov_seq)
        pw = prob_win_sampler(cov_rng) if prob_win_sampler else cov_rng.uniform(lo, hi)
        season = int(i >= n_games // 2) if n_games > 1 else 0
        matches.append(simulate_game(params, pw, season, game_seq,
                                     game_id=f"G{i:0{width}d}"))
    return matches


def simulate_dataset(n_games: int, params: SimParams, seed: int = 0) -> Dataset:
    return Dataset.from_matches(simulate_league(n_games, params, seed))


# ------------------------------------------------------------------- oracle

ORACLE_MAX_ROWS = 12


def _oracle_covariates(row, t: float, spec: ModelSpec) -> list[float]:
    second = row.goal_index == 2
    values = {
        PROB_WIN: row.prob_win,
        SEASON: float(row.season),
        GOAL: 1.0 if second else 0.0,
        TIME_OF_FIRST_GOAL: row.time_of_first_goal if second else 0.0,
        FIRST_GOAL_TEAM: float(row.first_goal_team) if second else 0.0,
        TIME_FROM_FIRST_GOAL: 0.0,
    }
    if second:
        u = t - row.time_of_first_goal
        values[TIME_FROM_FIRST_GOAL] = math.log(u) if spec.time_transform == "log" else u
    return [values[term] for term in spec.terms]


def brute_force_partial_loglik(dataset: Dataset, spec: ModelSpec, beta: Sequence[float],
                               ties: str | None = None, derivatives: bool = False):
    """Partial likelihood by explicit enumeration of every risk set.

    Pure Python over the raw rows, independent of the design/kernels path.
    With ``derivatives=True`` returns ``(loglik, gradient, hessian)`` as lists.
    """
    rows = list(dataset.rows)
    if len(rows) > ORACLE_MAX_ROWS:
        raise ContractError(f"oracle handles at most {ORACLE_MAX_ROWS} rows")
    ties = ties or spec.ties_method
    p = len(spec.terms)
    beta = [float(b) for b in beta]

    def stratum(r):
        return r.goal_index if spec.stratify_by_goal else 0

    loglik = 0.0
    grad = [0.0] * p
    hess = [[0.0] * p for _ in range(p)]
    event_times = sorted({(stratum(r), r.exit) for r in rows if r.event})
    for s, t in event_times:
        risk = [r for r in rows if stratum(r) == s and r.entry < t <= r.exit]
        dead = [r for r in risk if r.event and r.exit == t]
        dead_ids = {id(r) for r in dead}
        xs = {id(r): _oracle_covariates(r, t, spec) for r in risk}
        w = {id(r): math.exp(sum(b * x for b, x in zip(beta, xs[id(r)]))) for r in risk}
        d = len(dead)
        for r in dead:
            loglik += sum(b * x for b, x in zip(beta, xs[id(r)]))
            for a in range(p):
                grad[a] += xs[id(r)][a]
        for k in range(d):
            frac = k / d if ties == "efron" else 0.0
            members = [(r, 1.0 - frac if id(r) in dead_ids else 1.0) for r in risk]
            den = sum(c * w[id(r)] for r, c in members)
            loglik -= math.log(den)
            mean = [sum(c * w[id(r)] * xs[id(r)][a] for r, c in members) / den
                    for a in range(p)]
            for a in range(p):
                grad[a] -= mean[a]
                for b_ in range(p):
                    second = sum(c * w[id(r)] * xs[id(r)][a] * xs[id(r)][b_]
                                 for r, c in members) / den
                    hess[a][b_] -= second - mean[a] * mean[b_]
    if derivatives:
        return loglik, grad, hess
    return loglik
