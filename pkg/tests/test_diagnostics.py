import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from goalhazard import coxfit, diagnostics as dg
from goalhazard.ingest import Dataset
from goalhazard.model import ContractError, ModelSpec, ObservationRow, expand_preset


def test_sole_member_event_residual_zero():
    ds = Dataset.from_rows([ObservationRow("a", 1, 0.0, 10.0, True, 0.5, 0)])
    spec = ModelSpec(terms=())
    r = dg.martingale_residuals(ds, spec, coxfit.fit(ds, spec))
    assert r.tolist() == [0.0]


def test_four_row_hand_computation():
    rows = [ObservationRow("a", 1, 0.0, 10.0, True, 0.5, 0),
            ObservationRow("a", 2, 10.0, 25.0, False, 0.5, 0, 10.0, True),
            ObservationRow("b", 1, 0.0, 20.0, True, 0.3, 0),
            ObservationRow("c", 1, 0.0, 90.0, False, 0.7, 0)]
    ds = Dataset.from_rows(rows)
    spec = ModelSpec(terms=())
    r = dg.martingale_residuals(ds, spec, coxfit.fit(ds, spec))
    np.testing.assert_allclose(r, [2 / 3, -1 / 3, 1 / 3, -2 / 3], atol=1e-10)


@pytest.mark.parametrize("model", ["III", "VI", "VII", "I"])
def test_residual_identities(vi_dataset, model):
    spec = expand_preset(model)
    res = dg.residuals(vi_dataset, spec, coxfit.fit(vi_dataset, spec))
    assert abs(res.martingale.sum()) < 1e-6
    assert np.all(res.martingale[res.event == 0] <= 0)
    assert np.array_equal(np.sign(res.martingale), np.sign(res.deviance))


def test_breslow_ties_residuals_also_sum_to_zero(vi_dataset):
    spec = expand_preset("VI", ties_method="breslow")
    r = dg.martingale_residuals(vi_dataset, spec, coxfit.fit(vi_dataset, spec))
    assert abs(r.sum()) < 1e-6


def test_deviance_examples():
    d = dg.deviance_residuals([0.0, -0.5, 0.6], [0, 0, 1])
    assert d[0] == 0
    assert d[1] == pytest.approx(-1.0)
    assert d[2] == pytest.approx(math.sqrt(-2 * (0.6 + math.log(0.4))), abs=1e-12)
    assert d[2] == pytest.approx(0.7953, abs=5e-4)


def test_impossible_martingale_residual_rejected():
    with pytest.raises(ContractError):
        dg.deviance_residuals([0.2], [0])
    with pytest.raises(ContractError):
        dg.deviance_residuals([1.5], [1])


def test_deviance_small_residual_series():
    r = np.array([1e-200, -3e-5, 2e-4, 9e-4])
    d = dg.deviance_residuals(r, np.ones(4))
    exact = np.sign(r) * np.sqrt(-2 * (r + np.log1p(-r)))
    np.testing.assert_allclose(d[1:], exact[1:], rtol=1e-9)
    assert d[0] == pytest.approx(1e-200, rel=1e-12)


@given(st.floats(-20, 0.999), st.sampled_from([0, 1]))
def test_deviance_sign_matches(r, delta):
    if r > delta:
        return
    d = dg.deviance_residuals([r], [delta])[0]
    assert np.sign(d) == np.sign(r)


def test_csv_exports(vi_dataset):
    spec = expand_preset("VI")
    res = dg.residuals(vi_dataset, spec, coxfit.fit(vi_dataset, spec))
    lines = dg.residuals_csv(res, "hdr").splitlines()
    assert lines[:2] == ["# hdr", "game_id,j,martingale,deviance"]
    assert len(lines) == 2 + len(vi_dataset.rows)
    scatter = dg.scatter_csv(res).splitlines()
    assert scatter[0] == "panel,x,deviance,game_id,j"
    n2 = int(np.sum(res.goal_index == 2))
    assert sum(1 for s in scatter if s.startswith("TimeOfFirstGoal")) == n2
    assert sum(1 for s in scatter if s.startswith("ProbWin")) == len(vi_dataset.rows)


def test_immediate_effect_examples():
    assert dg.immediate_effect(-0.59, 0.011, 0) == pytest.approx(0.554, abs=5e-4)
    assert dg.immediate_effect(0, 0, 37) == 1
    assert dg.immediate_effect(-0.594, 0.011, 90) == pytest.approx(1.486, abs=5e-4)


def test_crossover_examples():
    assert dg.crossover_minute(-0.594, 0.011) == pytest.approx(54.0, abs=1e-9)
    assert dg.crossover_minute(-1, 1) == 1
    assert dg.crossover_minute(0, 0.011) == 0
    with pytest.raises(ContractError):
        dg.crossover_minute(-0.5, 0)


def test_elapsed_effect_examples():
    assert dg.elapsed_effect(0.1597, 5) == pytest.approx(1.293, abs=0.001)
    assert dg.elapsed_effect(0.1597, 30) == pytest.approx(1.72, abs=0.005)
    assert dg.elapsed_effect(0.7, 1) == 1
    for bad in (0, -3):
        with pytest.raises(ContractError):
            dg.elapsed_effect(0.16, bad)


def test_probwin_ratio_examples():
    assert dg.probwin_ratio(1.915, 0.1) == pytest.approx(1.21, abs=0.005)
    assert dg.probwin_ratio(1.915, 0) == 1
    assert dg.probwin_ratio(1.915, -0.1) == pytest.approx(0.826, abs=5e-4)


@given(st.floats(-3, 3), st.floats(0.01, 50), st.floats(0.01, 50))
def test_elapsed_effect_multiplicative(beta, a, b):
    assert dg.elapsed_effect(beta, a * b) == pytest.approx(
        dg.elapsed_effect(beta, a) * dg.elapsed_effect(beta, b), rel=1e-12)


@given(st.floats(-3, 3), st.floats(-1, 1).filter(lambda x: abs(x) > 1e-6))
def test_immediate_effect_neutral_at_crossover(b3, b4):
    assert dg.immediate_effect(b3, b4, dg.crossover_minute(b3, b4)) == 1.0
