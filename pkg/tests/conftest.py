import numpy as np
import pytest

from goalhazard import Dataset, GoalEvent, MatchRecord, build_observations
from goalhazard.model import expand_preset
from goalhazard.simulate import SimParams, simulate_dataset

VI_TRUTH = {"ProbWin": 1.9, "Season": 0.15, "Goal": -0.6, "TimeOfFirstGoal": 0.011,
            "TimeFromFirstGoal": 0.16}


def match(game_id, goals, odds=(2.0, 3.4, 3.8), season=0):
    evs = tuple(GoalEvent(m, side == "H") for m, side in goals)
    return MatchRecord(game_id=game_id, season=season, home_team="h", away_team="a", goals=evs,
                       odds_home=odds[0], odds_draw=odds[1], odds_away=odds[2])


def random_small_dataset(rng, max_rows=12, tie_heavy=False):
    """A few random games with whole-minute goals (ties likely), at most ``max_rows`` rows."""
    while True:
        rows = []
        g = 0
        while True:
            n_goals = rng.integers(0, 3)
            span = 12 if tie_heavy else 89
            minutes = sorted(int(m) for m in rng.integers(1, span + 1, size=n_goals))
            goals = [(m, "H" if rng.random() < 0.6 else "A") for m in minutes]
            m = match(f"R{g:02d}", goals, season=int(rng.integers(0, 2)))
            new = build_observations(m, float(rng.uniform(0.1, 0.9)))
            if len(rows) + len(new) > max_rows:
                break
            rows += new
            g += 1
        if any(r.event for r in rows):
            return Dataset.from_rows(rows)


@pytest.fixture
def newcastle():
    # home goals 19 and 78, away goals 29 and 55
    return match("NEW-WHU", [(19, "H"), (29, "A"), (55, "A"), (78, "H")])


@pytest.fixture(scope="session")
def vi_params():
    spec = expand_preset("VI")
    return SimParams(spec, VI_TRUTH)


@pytest.fixture(scope="session")
def vi_dataset(vi_params):
    return simulate_dataset(2000, vi_params, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
