"""Domain types shared across the pipeline.

Everything here is immutable after construction and carries only invariant
checks; numerics live in the fitting modules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

GAME_LENGTH = 90

PROB_WIN = "ProbWin"
SEASON = "Season"
GOAL = "Goal"
TIME_OF_FIRST_GOAL = "TimeOfFirstGoal"
FIRST_GOAL_TEAM = "FirstGoalTeam"
TIME_FROM_FIRST_GOAL = "TimeFromFirstGoal"

#: Canonical term order; design matrices and coefficient vectors follow it.
TERMS = (PROB_WIN, SEASON, GOAL, TIME_OF_FIRST_GOAL, FIRST_GOAL_TEAM,
         TIME_FROM_FIRST_GOAL)

#: Terms that only act on second-goal rows.
SECOND_GOAL_TERMS = frozenset(TERMS[2:])

TRANSFORMS = ("identity", "log")
TIES = ("efron", "breslow")


class ContractError(ValueError):
    """An input violates an operation's preconditions."""


class MonotoneLikelihoodError(ContractError):
    """A coefficient diverges because the partial likelihood has no maximum."""

    def __init__(self, term: str, value: float):
        self.term = term
        self.value = value
        super().__init__(
            f"monotone likelihood: coefficient for {term} diverged ({value:.3g})")


@dataclass(frozen=True)
class GoalEvent:
    minute: int
    scored_by_home: bool

    def __post_init__(self):
        if isinstance(self.minute, bool) or int(self.minute) != self.minute:
            raise ContractError(f"goal minute must be an integer, got {self.minute!r}")
        if not 1 <= self.minute <= GAME_LENGTH:
            raise ContractError(f"goal minute {self.minute} outside [1, {GAME_LENGTH}]")
        object.__setattr__(self, "minute", int(self.minute))
        object.__setattr__(self, "scored_by_home", bool(self.scored_by_home))


@dataclass(frozen=True)
class MatchRecord:
    game_id: str
    season: int
    home_team: str
    away_team: str
    goals: tuple[GoalEvent, ...]
    odds_home: float
    odds_draw: float
    odds_away: float
    date: str = ""

    def __post_init__(self):
        object.__setattr__(self, "goals", tuple(self.goals))
        if self.season not in (0, 1):
            raise ContractError(f"season must be 0 or 1, got {self.season!r}")
        minutes = [g.minute for g in self.goals]
        if minutes != sorted(minutes):
            raise ContractError(f"goals of game {self.game_id} are not sorted by minute")
        for name in ("odds_home", "odds_draw", "odds_away"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 1.0):
                raise ContractError(f"{name} must be > 1, got {value!r}")


@dataclass(frozen=True)
class ObservationRow:
    """One counting-process interval ``(entry, exit]`` of a game.

    ``time_of_first_goal`` and ``first_goal_team`` are ``None`` on first-goal
    rows (``goal_index == 1``).
    """

    game_id: str
    goal_index: int
    entry: float
    exit: float
    event: bool
    prob_win: float
    season: int
    time_of_first_goal: float | None = None
    first_goal_team: bool | None = None

    def __post_init__(self):
        if self.goal_index not in (1, 2):
            raise ContractError(f"goal_index must be 1 or 2, got {self.goal_index!r}")
        if not self.entry < self.exit:
            raise ContractError(
                f"row {self.game_id}/{self.goal_index}: entry {self.entry} >= exit {self.exit}")
        if self.exit > GAME_LENGTH:
            raise ContractError(f"row {self.game_id}/{self.goal_index}: exit beyond {GAME_LENGTH}")
        if not 0.0 < self.prob_win < 1.0:
            raise ContractError(f"prob_win must lie in (0, 1), got {self.prob_win!r}")
        second = self.goal_index == 2
        if second != (self.time_of_first_goal is not None) or \
                second != (self.first_goal_team is not None):
            raise ContractError(
                "first-goal context must be present exactly on second-goal rows")
        if second and self.entry != self.time_of_first_goal:
            raise ContractError("second-goal rows must enter at the time of the first goal")
        if not second and self.entry != 0:
            raise ContractError("first-goal rows must enter at time 0")


@dataclass(frozen=True)
class ModelSpec:
    terms: tuple[str, ...]
    time_transform: str = "identity"
    stratify_by_goal: bool = False
    frailty: bool = False
    ties_method: str = "efron"
    name: str | None = None

    def __post_init__(self):
        unknown = set(self.terms) - set(TERMS)
        if unknown:
            raise ContractError(f"unknown terms: {sorted(unknown)}")
        if len(set(self.terms)) != len(self.terms):
            raise ContractError("duplicate terms")
        # keep canonical order so coefficient vectors line up across specs
        object.__setattr__(self, "terms", tuple(t for t in TERMS if t in self.terms))
        if self.time_transform not in TRANSFORMS:
            raise ContractError(f"time_transform must be one of {TRANSFORMS}")
        if self.ties_method not in TIES:
            raise ContractError(f"ties_method must be one of {TIES}")
        if self.stratify_by_goal and SECOND_GOAL_TERMS & set(self.terms):
            raise ContractError("stratified specs cannot carry second-goal terms")

    @property
    def has_time_dependent(self) -> bool:
        return TIME_FROM_FIRST_GOAL in self.terms

    def label(self, term: str) -> str:
        """Display name of a term, as printed in coefficient tables."""
        if term == TIME_FROM_FIRST_GOAL and self.time_transform == "log":
            return "logTimeFromFirstGoal"
        return term

    def with_(self, **changes) -> "ModelSpec":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {"name": self.name, "terms": list(self.terms),
                "time_transform": self.time_transform,
                "stratify_by_goal": self.stratify_by_goal,
                "frailty": self.frailty, "ties_method": self.ties_method}

    @classmethod
    def from_dict(cls, d: Mapping) -> "ModelSpec":
        return cls(terms=tuple(d["terms"]), time_transform=d.get("time_transform", "identity"),
                   stratify_by_goal=bool(d.get("stratify_by_goal", False)),
                   frailty=bool(d.get("frailty", False)),
                   ties_method=d.get("ties_method", "efron"), name=d.get("name"))


_FULL = TERMS
_PRESETS = {
    "I": dict(terms=_FULL),
    "II": dict(terms=_FULL, frailty=True),
    "III": dict(terms=(PROB_WIN, SEASON)),
    "IV": dict(terms=(PROB_WIN, SEASON, TIME_OF_FIRST_GOAL)),
    "V": dict(terms=(PROB_WIN, SEASON, GOAL, TIME_OF_FIRST_GOAL, TIME_FROM_FIRST_GOAL)),
    "VI": dict(terms=(PROB_WIN, SEASON, GOAL, TIME_OF_FIRST_GOAL, TIME_FROM_FIRST_GOAL),
               time_transform="log"),
    "VII": dict(terms=(PROB_WIN, SEASON), stratify_by_goal=True),
}
PRESET_NAMES = tuple(_PRESETS)


def expand_preset(name: str, ties_method: str = "efron") -> ModelSpec:
    """Return the :class:`ModelSpec` of one of the named models ``I`` .. ``VII``."""
    try:
        kwargs = _PRESETS[name]
    except KeyError:
        raise ContractError(
            f"unknown model {name!r}; expected one of {', '.join(PRESET_NAMES)}") from None
    return ModelSpec(name=name, ties_method=ties_method, **kwargs)


@dataclass
class FitResult:
    """Outcome of a proportional-hazards fit.

    ``coefficients`` keeps the spec's canonical term order. ``frailty`` is an
    empty dict for ordinary fits; shared-frailty fits store the profile
    summary there (``theta``, ``lrt_statistic``, ``p_value``, ...).
    """

    spec: ModelSpec
    coefficients: dict[str, float]
    covariance: np.ndarray
    loglik_null: float
    loglik_final: float
    iterations: int
    converged: bool
    theta: float = 0.0
    frailty_values: dict[str, float] = field(default_factory=dict)
    frailty: dict = field(default_factory=dict)
    n_rows: int = 0
    n_events: int = 0
    loglik_history: list[float] = field(default_factory=list)

    @property
    def terms(self) -> tuple[str, ...]:
        return tuple(self.coefficients)

    @property
    def beta(self) -> np.ndarray:
        return np.array(list(self.coefficients.values()), dtype=float)

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))

    @property
    def z(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.beta / self.se

    @property
    def p_values(self) -> np.ndarray:
        from .coxfit import normal_two_sided_p
        return np.array([normal_two_sided_p(z) for z in self.z])

    def coef(self, term: str) -> float:
        return self.coefficients[term]

    def se_of(self, term: str) -> float:
        return float(self.se[self.terms.index(term)])


@dataclass(frozen=True)
class BaselineHazard:
    """Cumulative baseline hazard of one stratum.

    The hazard is referenced at ``reference`` (zero covariates unless
    re-referenced). Besides the public step function this keeps the per-jump
    pieces needed to propagate coefficient uncertainty into covariate-profile
    predictions: ``jumps`` (hazard increments), ``jump_sq`` (their variance
    contributions) and ``score_terms`` (derivative of each increment with
    respect to the coefficients, sign flipped).
    """

    stratum: str
    times: np.ndarray
    jumps: np.ndarray
    jump_sq: np.ndarray
    score_terms: np.ndarray
    beta: np.ndarray
    covariance: np.ndarray
    reference: np.ndarray
    has_events: bool = True

    @property
    def cumulative_hazard(self) -> np.ndarray:
        return np.cumsum(self.jumps)

    @property
    def variance(self) -> np.ndarray:
        q = np.cumsum(self.score_terms, axis=0)
        delta = np.einsum("ti,ij,tj->t", q, self.covariance, q)
        return np.cumsum(self.jump_sq) + delta

    @property
    def steps(self) -> list[tuple[float, float, float]]:
        return list(zip(self.times.tolist(), self.cumulative_hazard.tolist(),
                        self.variance.tolist()))

    def at(self, t):
        """Right-continuous evaluation; zero before the first jump."""
        idx = np.searchsorted(self.times, t, side="right")
        padded = np.concatenate([[0.0], self.cumulative_hazard])
        out = padded[idx]
        return float(out) if np.ndim(out) == 0 else out

    def rereferenced(self, shift: Sequence[float]) -> "BaselineHazard":
        """The same fit expressed relative to covariate profile ``reference + shift``."""
        shift = np.asarray(shift, dtype=float)
        factor = math.exp(float(shift @ self.beta))
        return replace(
            self, jumps=self.jumps * factor, jump_sq=self.jump_sq * factor ** 2,
            score_terms=factor * (self.score_terms - np.outer(self.jumps, shift)),
            reference=self.reference + shift)
