import pytest

from goalhazard.model import (
    PRESET_NAMES, TERMS, ContractError, FitResult, GoalEvent, MatchRecord, ModelSpec,
    ObservationRow, expand_preset,
)
import numpy as np


def test_preset_III_is_the_null_model():
    spec = expand_preset("III")
    assert spec.terms == ("ProbWin", "Season")
    assert not spec.stratify_by_goal and not spec.frailty
    assert spec.ties_method == "efron"


def test_preset_VI_uses_log_elapsed_time():
    spec = expand_preset("VI")
    assert set(spec.terms) == {"ProbWin", "Season", "Goal", "TimeOfFirstGoal", "TimeFromFirstGoal"}
    assert spec.time_transform == "log"
    assert spec.label("TimeFromFirstGoal") == "logTimeFromFirstGoal"


def test_preset_II_adds_frailty_to_I():
    one, two = expand_preset("I"), expand_preset("II")
    assert two.terms == one.terms == TERMS
    assert two.frailty and not one.frailty


def test_preset_VII_is_stratified_without_second_goal_terms():
    spec = expand_preset("VII")
    assert spec.stratify_by_goal and spec.terms == ("ProbWin", "Season")


def test_unknown_preset_rejected():
    with pytest.raises(ContractError):
        expand_preset("VIII")


def test_presets_total_and_idempotent():
    for name in PRESET_NAMES:
        assert expand_preset(name) == expand_preset(name)
        assert expand_preset(name).name == name
    assert set(PRESET_NAMES) == {"I", "II", "III", "IV", "V", "VI", "VII"}


def test_nesting_ladder():
    t = {n: set(expand_preset(n).terms) for n in PRESET_NAMES}
    assert t["III"] < t["IV"] < t["V"]
    assert t["V"] == t["VI"]
    assert expand_preset("V").time_transform != expand_preset("VI").time_transform


def test_spec_rejects_bad_combinations():
    with pytest.raises(ContractError):
        ModelSpec(terms=("ProbWin", "Goal"), stratify_by_goal=True)
    with pytest.raises(ContractError):
        ModelSpec(terms=("Nonsense",))
    with pytest.raises(ContractError):
        ModelSpec(terms=("ProbWin",), ties_method="exact")


def test_spec_terms_canonical_order_and_dict_round_trip():
    spec = ModelSpec(terms=("Season", "ProbWin"))
    assert spec.terms == ("ProbWin", "Season")
    assert ModelSpec.from_dict(spec.to_dict()) == spec


def test_match_record_invariants():
    with pytest.raises(ContractError):
        MatchRecord("g", 0, "a", "b", (GoalEvent(30, True), GoalEvent(10, False)), 2, 3, 4)
    with pytest.raises(ContractError):
        MatchRecord("g", 0, "a", "b", (), 1.0, 3, 4)
    with pytest.raises(ContractError):
        GoalEvent(91, True)
    with pytest.raises(ContractError):
        GoalEvent(0, True)


def test_observation_row_invariants():
    ObservationRow("g", 2, 19.0, 29.0, False, 0.5, 0, 19.0, True)
    with pytest.raises(ContractError):
        ObservationRow("g", 1, 10.0, 10.0, False, 0.5, 0)
    with pytest.raises(ContractError):
        ObservationRow("g", 2, 19.0, 29.0, False, 0.5, 0)          # missing context
    with pytest.raises(ContractError):
        ObservationRow("g", 2, 18.0, 29.0, False, 0.5, 0, 19.0, True)


def test_fit_result_exp_coef_and_se():
    spec = expand_preset("III")
    fr = FitResult(spec=spec, coefficients={"ProbWin": 1.932, "Season": 0.1},
                   covariance=np.diag([0.04, 0.01]), loglik_null=-10.0, loglik_final=-9.0,
                   iterations=3, converged=True)
    from goalhazard.coxfit import coefficient_rows
    row = coefficient_rows(fr)[0]
    assert f"{row['exp_coef']:.4g}" == f"{np.exp(1.932):.4g}"
    np.testing.assert_allclose(fr.se, [0.2, 0.1])
    np.testing.assert_allclose(fr.z, [9.66, 1.0])
