"""Match files, the ProbWin propensity score, and the counting-process dataset."""

from __future__ import annotations

import csv
import io
import math
import statistics
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .model import GAME_LENGTH, ContractError, GoalEvent, MatchRecord, ObservationRow

MATCH_HEADER = ("game_id", "date", "season", "home", "away",
                "odds_home", "odds_draw", "odds_away", "goals")
DATASET_HEADER = ("game_id", "j", "entry", "exit", "event", "prob_win", "season",
                  "time_of_first_goal", "first_goal_team")

# second goal in the same recorded minute as the first
SAME_MINUTE_SHIFT = 0.5


class ParseError(ValueError):
    """A malformed input file; ``problems`` holds ``(line_number, message)`` pairs."""

    def __init__(self, source: str, problems: Sequence[tuple[int, str]]):
        self.source = source
        self.problems = list(problems)
        lines = "\n".join(f"  line {n}: {msg}" for n, msg in self.problems)
        super().__init__(f"{source}: {len(self.problems)} malformed row(s)\n{lines}")


def probwin_from_odds(odds_home: float, odds_draw: float, odds_away: float) -> float:
    """Home-win probability from decimal 1X2 odds, overround removed proportionally.

    >>> probwin_from_odds(2.0, 4.0, 4.0)
    0.5
    """
    for name, value in (("odds_home", odds_home), ("odds_draw", odds_draw),
                        ("odds_away", odds_away)):
        if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 1.0):
            raise ContractError(f"{name} must be decimal odds > 1, got {value!r}")
    implied = (1.0 / odds_home, 1.0 / odds_draw, 1.0 / odds_away)
    return implied[0] / math.fsum(implied)


def build_observations(match: MatchRecord, prob_win: float) -> list[ObservationRow]:
    """Split one game into its first-goal and (left-truncated) second-goal rows."""
    goals = match.goals
    common = dict(game_id=match.game_id, prob_win=prob_win, season=match.season)
    if not goals:
        return [ObservationRow(goal_index=1, entry=0.0, exit=float(GAME_LENGTH),
                               event=False, **common)]
    first = goals[0]
    rows = [ObservationRow(goal_index=1, entry=0.0, exit=float(first.minute),
                           event=first.scored_by_home, **common)]
    if first.minute >= GAME_LENGTH:
        return rows
    t_first = float(first.minute)
    if len(goals) > 1:
        second = goals[1]
        exit_ = float(second.minute)
        if exit_ == t_first:
            exit_ = t_first + SAME_MINUTE_SHIFT
        event = second.scored_by_home
    else:
        exit_, event = float(GAME_LENGTH), False
    rows.append(ObservationRow(goal_index=2, entry=t_first, exit=exit_, event=event,
                               time_of_first_goal=t_first,
                               first_goal_team=first.scored_by_home, **common))
    return rows


@dataclass(frozen=True)
class DatasetSummary:
    n_games: int
    n_rows: int
    n_censored_total: int
    n_censored_first: int
    n_censored_second: int
    n_goalless: int
    n_first_goal_at_90: int
    mean_probwin: float
    sd_probwin: float | None
    n_home_first_goals: int
    mean_time_of_first_goal: float | None
    sd_time_of_first_goal: float | None

    def as_table(self) -> str:
        def fmt(v):
            if v is None:
                return "NA"
            return f"{v:.4g}" if isinstance(v, float) else str(v)
        width = max(len(k) for k in self.__dataclass_fields__)
        return "\n".join(f"{k:<{width}}  {fmt(getattr(self, k))}"
                         for k in self.__dataclass_fields__)


@dataclass(frozen=True)
class Dataset:
    rows: tuple[ObservationRow, ...]
    games: int
    # game_id -> minute of the game's first goal (None if goalless); only known
    # when built from match records, since an away goal at minute 90 and a
    # goalless game produce the same single row
    first_goal_minutes: dict | None = None

    def __len__(self):
        return len(self.rows)

    @property
    def summary(self) -> DatasetSummary:
        return summarize(self)

    @classmethod
    def from_matches(cls, matches: Iterable[MatchRecord]) -> "Dataset":
        matches = sorted(matches, key=lambda m: m.game_id)
        ids = [m.game_id for m in matches]
        if len(set(ids)) != len(ids):
            raise ContractError("duplicate game_id in match list")
        rows: list[ObservationRow] = []
        firsts = {}
        for m in matches:
            pw = probwin_from_odds(m.odds_home, m.odds_draw, m.odds_away)
            rows.extend(build_observations(m, pw))
            firsts[m.game_id] = float(m.goals[0].minute) if m.goals else None
        return cls(rows=tuple(rows), games=len(matches), first_goal_minutes=firsts)

    @classmethod
    def from_rows(cls, rows: Iterable[ObservationRow]) -> "Dataset":
        rows = tuple(sorted(rows, key=lambda r: (r.game_id, r.goal_index)))
        games = len({r.game_id for r in rows})
        return cls(rows=rows, games=games)


def summarize(dataset: Dataset) -> DatasetSummary:
    """Descriptive counts and moments of a dataset (sample sd, ``n - 1``)."""
    rows = dataset.rows
    if not rows:
        raise ContractError("cannot summarize an empty dataset")
    first_rows = [r for r in rows if r.goal_index == 1]
    second_by_game = {r.game_id: r for r in rows if r.goal_index == 2}
    if dataset.first_goal_minutes is not None:
        first_times = [t for t in dataset.first_goal_minutes.values() if t is not None]
    else:
        # rows alone: an unscored (0, 90] row without a second row counts as goalless
        first_times = [r.exit for r in first_rows
                       if r.event or r.game_id in second_by_game or r.exit < GAME_LENGTH]
    n_goalless = len(first_rows) - len(first_times)
    n_at_90 = sum(1 for t in first_times if t >= GAME_LENGTH)
    pw = [r.prob_win for r in first_rows]  # one value per game
    cens_first = sum(1 for r in first_rows if not r.event)
    cens_second = sum(1 for r in second_by_game.values() if not r.event)
    return DatasetSummary(
        n_games=len(first_rows),
        n_rows=len(rows),
        n_censored_total=cens_first + cens_second,
        n_censored_first=cens_first,
        n_censored_second=cens_second,
        n_goalless=n_goalless,
        n_first_goal_at_90=n_at_90,
        mean_probwin=statistics.fmean(pw),
        sd_probwin=statistics.stdev(pw) if len(pw) > 1 else None,
        n_home_first_goals=sum(1 for r in first_rows if r.event),
        mean_time_of_first_goal=statistics.fmean(first_times) if first_times else None,
        sd_time_of_first_goal=statistics.stdev(first_times) if len(first_times) > 1 else None,
    )


def _parse_goals(field: str) -> list[GoalEvent]:
    goals = []
    for token in filter(None, (t.strip() for t in field.split(";"))):
        minute, sep, side = token.partition(":")
        if not sep or side not in ("H", "A"):
            raise ValueError(f"bad goal token {token!r} (expected minute:H|A)")
        try:
            m = int(minute)
        except ValueError:
            raise ValueError(f"bad goal minute in {token!r}") from None
        goals.append(GoalEvent(m, side == "H"))
    return goals


def format_goals(goals: Sequence[GoalEvent]) -> str:
    return ";".join(f"{g.minute}:{'H' if g.scored_by_home else 'A'}" for g in goals)


def parse_matches(text: str, source: str = "<matches>") -> list[MatchRecord]:
    """Parse match-file CSV text; every malformed row is reported with its line number."""
    lines = text.splitlines()
    numbered = [(i + 1, line) for i, line in enumerate(lines)
                if line.strip() and not line.startswith("#")]
    if not numbered:
        raise ParseError(source, [(1, "empty file")])
    header_no, header = numbered[0]
    columns = next(csv.reader([header]))
    if tuple(c.strip() for c in columns) != MATCH_HEADER:
        raise ParseError(source, [(header_no, f"expected header {','.join(MATCH_HEADER)}")])
    matches, problems = [], []
    for line_no, line in numbered[1:]:
        fields = next(csv.reader([line]))
        if len(fields) != len(MATCH_HEADER):
            problems.append((line_no, f"expected {len(MATCH_HEADER)} fields, got {len(fields)}"))
            continue
        rec = dict(zip(MATCH_HEADER, fields))
        try:
            goals = _parse_goals(rec["goals"])
            goals.sort(key=lambda g: g.minute)
            matches.append(MatchRecord(
                game_id=rec["game_id"], date=rec["date"], season=int(rec["season"]),
                home_team=rec["home"], away_team=rec["away"], goals=tuple(goals),
                odds_home=float(rec["odds_home"]), odds_draw=float(rec["odds_draw"]),
                odds_away=float(rec["odds_away"])))
        except ValueError as exc:
            problems.append((line_no, str(exc)))
    if problems:
        raise ParseError(source, problems)
    return matches


def read_matches(path: str | Path) -> list[MatchRecord]:
    return parse_matches(Path(path).read_text(), source=str(path))


def format_matches(matches: Iterable[MatchRecord], comment: str | None = None) -> str:
    buf = io.StringIO()
    if comment:
        buf.write(f"# {comment}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MATCH_HEADER)
    for m in matches:
        w.writerow([m.game_id, m.date, m.season, m.home_team, m.away_team,
                    repr(m.odds_home), repr(m.odds_draw), repr(m.odds_away),
                    format_goals(m.goals)])
    return buf.getvalue()


def _num(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def format_dataset(dataset: Dataset, comment: str | None = None) -> str:
    buf = io.StringIO()
    if comment:
        buf.write(f"# {comment}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DATASET_HEADER)
    for r in dataset.rows:
        second = r.goal_index == 2
        w.writerow([r.game_id, r.goal_index, _num(r.entry), _num(r.exit), int(r.event),
                    repr(r.prob_win), r.season,
                    _num(r.time_of_first_goal) if second else "",
                    int(r.first_goal_team) if second else ""])
    return buf.getvalue()


def parse_dataset(text: str, source: str = "<dataset>") -> Dataset:
    numbered = [(i + 1, line) for i, line in enumerate(text.splitlines())
                if line.strip() and not line.startswith("#")]
    if not numbered or tuple(next(csv.reader([numbered[0][1]]))) != DATASET_HEADER:
        raise ParseError(source, [(numbered[0][0] if numbered else 1,
                                   f"expected header {','.join(DATASET_HEADER)}")])
    rows, problems = [], []
    for line_no, line in numbered[1:]:
        fields = next(csv.reader([line]))
        if len(fields) != len(DATASET_HEADER):
            problems.append((line_no, f"expected {len(DATASET_HEADER)} fields"))
            continue
        rec = dict(zip(DATASET_HEADER, fields))
        try:
            second = rec["j"] == "2"
            rows.append(ObservationRow(
                game_id=rec["game_id"], goal_index=int(rec["j"]),
                entry=float(rec["entry"]), exit=float(rec["exit"]),
                event=bool(int(rec["event"])), prob_win=float(rec["prob_win"]),
                season=int(rec["season"]),
                time_of_first_goal=float(rec["time_of_first_goal"]) if second else None,
                first_goal_team=bool(int(rec["first_goal_team"])) if second else None))
        except ValueError as exc:
            problems.append((line_no, str(exc)))
    if problems:
        raise ParseError(source, problems)
    return Dataset.from_rows(rows)


def read_dataset(path: str | Path) -> Dataset:
    return parse_dataset(Path(path).read_text(), source=str(path))
