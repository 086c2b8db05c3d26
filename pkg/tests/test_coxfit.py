import math
import warnings

import numpy as np
import pytest

from goalhazard import coxfit
from goalhazard.coxfit import chi2_upper, fit, hazard_ratio, lrt, lrt_from_logliks, partial_loglik
from goalhazard.design import make_design
from goalhazard.ingest import Dataset
from goalhazard.model import (
    ContractError, ModelSpec, MonotoneLikelihoodError, ObservationRow, expand_preset,
)
from goalhazard.simulate import SimParams, brute_force_partial_loglik, simulate_dataset

from conftest import random_small_dataset

FULL_LOG = ModelSpec(terms=("ProbWin", "Season", "Goal", "TimeOfFirstGoal", "FirstGoalTeam",
                            "TimeFromFirstGoal"), time_transform="log")


def row(g, j, entry, exit_, event, pw, season=0, tfg=None, fgt=None):
    return ObservationRow(g, j, float(entry), float(exit_), event, pw, season, tfg, fgt)


def test_beta_zero_untied_is_minus_log_risk_set_sizes():
    rows = [row("a", 1, 0, 10, True, 0.3), row("b", 1, 0, 20, True, 0.6),
            row("c", 1, 0, 30, False, 0.5), row("d", 1, 0, 40, True, 0.7)]
    ll, _, _ = partial_loglik(Dataset.from_rows(rows), expand_preset("III"), [0.0, 0.0])
    assert ll == pytest.approx(-(math.log(4) + math.log(3) + math.log(1)), abs=1e-12)


def test_three_row_toy_matches_oracle():
    rows = [row("a", 1, 0, 12, True, 0.3, 1), row("a", 2, 12, 40, True, 0.3, 1, 12.0, True),
            row("b", 1, 0, 50, True, 0.7)]
    ds = Dataset.from_rows(rows)
    for beta in ([0.4, -0.2, 0.3, 0.01, 0.5, 0.2], [-1, 1, -0.5, 0.05, 0, -0.3]):
        ll, g, H = partial_loglik(ds, FULL_LOG, beta)
        oll, og, oH = brute_force_partial_loglik(ds, FULL_LOG, beta, derivatives=True)
        assert ll == pytest.approx(oll, abs=1e-10)
        np.testing.assert_allclose(g, og, atol=1e-10)
        np.testing.assert_allclose(H, oH, atol=1e-10)


def test_single_event_single_row_loglik_zero():
    ds = Dataset.from_rows([row("a", 1, 0, 10, True, 0.4)])
    ll, g, H = partial_loglik(ds, expand_preset("III"), [0.7, 0.0])
    assert ll == 0.0
    np.testing.assert_allclose(g, 0.0, atol=1e-15)


def test_single_event_dataset_equals_oracle_exactly(rng):
    rows = [row("a", 1, 0, 30, True, 0.4), row("b", 1, 0, 60, False, 0.2, 1),
            row("c", 1, 0, 90, False, 0.8)]
    ds = Dataset.from_rows(rows)
    spec = expand_preset("III")
    assert partial_loglik(ds, spec, [1.2, -0.4])[0] == pytest.approx(
        brute_force_partial_loglik(ds, spec, [1.2, -0.4]), rel=1e-15)


def test_tie_case_efron_and_breslow_differ_and_match_oracle():
    rows = [row("a", 1, 0, 10, True, 0.2), row("b", 1, 0, 10, True, 0.5),
            row("c", 1, 0, 10, False, 0.6), row("d", 1, 0, 25, True, 0.9, 1)]
    ds = Dataset.from_rows(rows)
    beta = [0.8, 0.3]
    values = {}
    for ties in ("efron", "breslow"):
        spec = expand_preset("III", ties_method=ties)
        values[ties] = partial_loglik(ds, spec, beta)[0]
        assert values[ties] == pytest.approx(brute_force_partial_loglik(ds, spec, beta), abs=1e-12)
    assert abs(values["efron"] - values["breslow"]) > 1e-3


@pytest.mark.parametrize("ties", ["efron", "breslow"])
def test_oracle_random_datasets(ties):
    rng = np.random.default_rng(99)
    for _ in range(25):
        ds = random_small_dataset(rng, tie_heavy=bool(rng.integers(0, 2)))
        spec = FULL_LOG.with_(ties_method=ties,
                              time_transform=("log", "identity")[int(rng.integers(0, 2))])
        beta = rng.normal(0, 0.7, size=len(spec.terms))
        ll, g, H = partial_loglik(ds, spec, beta)
        oll, og, oH = brute_force_partial_loglik(ds, spec, beta, derivatives=True)
        assert abs(ll - oll) < 1e-10
        assert np.max(np.abs(g - og)) < 1e-10
        assert np.max(np.abs(H - np.array(oH))) < 1e-10


def test_oracle_rejects_large_datasets(vi_dataset):
    with pytest.raises(ContractError):
        brute_force_partial_loglik(vi_dataset, expand_preset("III"), [0, 0])


def test_stratified_oracle():
    rng = np.random.default_rng(5)
    spec = expand_preset("VII")
    for _ in range(10):
        ds = random_small_dataset(rng, tie_heavy=True)
        beta = rng.normal(size=2)
        assert partial_loglik(ds, spec, beta)[0] == pytest.approx(
            brute_force_partial_loglik(ds, spec, beta), abs=1e-10)


def test_gradient_matches_finite_differences(vi_dataset):
    spec = expand_preset("VI")
    beta = np.array([1.5, 0.1, -0.4, 0.01, 0.1])
    _, g, H = partial_loglik(vi_dataset, spec, beta)
    for k in range(beta.size):
        e = np.zeros_like(beta)
        e[k] = 1e-5
        up = partial_loglik(vi_dataset, spec, beta + e)
        dn = partial_loglik(vi_dataset, spec, beta - e)
        assert (up[0] - dn[0]) / 2e-5 == pytest.approx(g[k], rel=1e-6, abs=1e-6)
        np.testing.assert_allclose((up[1] - dn[1]) / 2e-5, H[:, k], rtol=1e-5, atol=1e-5)


def test_underflow_names_the_event_time():
    rows = [row("a", 1, 0, 10, True, 0.5), row("b", 1, 0, 20, True, 0.5)]
    with pytest.raises(ContractError, match="event time 10"):
        partial_loglik(Dataset.from_rows(rows), expand_preset("III"), [2000.0, 0.0])


def test_frailty_spec_rejected_by_partial_loglik(vi_dataset):
    with pytest.raises(ContractError):
        partial_loglik(vi_dataset, expand_preset("II"), np.zeros(6))


def test_model_III_recovery():
    spec = expand_preset("III")
    ds = simulate_dataset(5000, SimParams(spec, {"ProbWin": 1.9, "Season": 0.15}), seed=21)
    res = fit(ds, spec)
    assert res.converged
    for term, truth in (("ProbWin", 1.9), ("Season", 0.15)):
        assert abs(res.coef(term) - truth) < 3 * res.se_of(term)


def test_fit_properties(vi_dataset):
    res = fit(vi_dataset, expand_preset("VI"))
    assert res.converged and res.iterations <= 25
    assert res.loglik_final >= res.loglik_null - 1e-8
    assert np.all(np.diff(res.loglik_history) >= 0)
    cov = res.covariance
    np.testing.assert_allclose(cov, cov.T)
    assert np.all(np.linalg.eigvalsh(cov) > 0)
    np.testing.assert_allclose(res.z, res.beta / res.se)


def test_empty_term_set_is_null_fit(vi_dataset):
    res = fit(vi_dataset, ModelSpec(terms=()))
    assert res.loglik_final == res.loglik_null
    assert res.coefficients == {} and res.covariance.shape == (0, 0)


def test_location_invariance(vi_dataset):
    spec = expand_preset("VI")
    d = make_design(vi_dataset, spec)
    base = fit(d)
    X = d.X.copy()
    X[:, 0] += 3.0      # ProbWin
    X[:, 3] -= 40.0     # TimeOfFirstGoal, shifted on every row
    moved = fit(d.with_columns(X))
    np.testing.assert_allclose(moved.beta, base.beta, atol=1e-8)


def test_location_invariance_time_dependent_column(vi_dataset):
    spec = expand_preset("V")
    d = make_design(vi_dataset, spec)
    base = fit(d)
    X = d.X.copy()
    X[:, d.td_col] += 7.0
    np.testing.assert_allclose(fit(d.with_columns(X)).beta, base.beta, atol=1e-8)


def test_scale_equivariance(vi_dataset):
    spec = expand_preset("VI")
    d = make_design(vi_dataset, spec)
    base = fit(d)
    c = -2.5
    X = d.X.copy()
    X[:, 0] *= c
    X[:, d.td_col] *= c
    scaled = fit(d.with_columns(X, td_scale=c))
    expect = base.beta.copy()
    expect[[0, d.td_col]] /= c
    np.testing.assert_allclose(scaled.beta, expect, atol=1e-8)
    assert scaled.loglik_final == pytest.approx(base.loglik_final, abs=1e-8)


def test_no_ties_efron_equals_breslow():
    rng = np.random.default_rng(8)
    rows = []
    for i in range(150):
        t = float(rng.uniform(1, 90))
        rows.append(row(f"g{i:03d}", 1, 0, round(t, 6), bool(rng.random() < 0.6),
                        float(rng.uniform(0.1, 0.9)), int(i % 2)))
    ds = Dataset.from_rows(rows)
    a = fit(ds, expand_preset("III"))
    b = fit(ds, expand_preset("III", ties_method="breslow"))
    np.testing.assert_allclose(a.beta, b.beta, atol=1e-10)
    np.testing.assert_allclose(a.covariance, b.covariance, atol=1e-10)
    assert a.loglik_final == pytest.approx(b.loglik_final, abs=1e-10)


def test_monotone_likelihood_names_term():
    # every event has the larger ProbWin: the coefficient runs off to infinity
    rows = [row(f"g{i}", 1, 0, 10 + i, True, 0.9) for i in range(5)]
    rows += [row(f"h{i}", 1, 0, 90, False, 0.1) for i in range(5)]
    with pytest.raises(MonotoneLikelihoodError, match="ProbWin"):
        fit(Dataset.from_rows(rows), ModelSpec(terms=("ProbWin",)))


def test_non_convergence_is_flagged(vi_dataset, monkeypatch):
    monkeypatch.setattr(coxfit, "MAX_ITER", 1)
    old = coxfit.newton.__defaults__
    monkeypatch.setattr(coxfit.newton, "__defaults__", (None, None, 1, old[3]))
    with pytest.warns(coxfit.ConvergenceWarning):
        res = fit(vi_dataset, expand_preset("VI"))
    assert not res.converged and res.iterations == 1


def test_hazard_ratio_examples():
    assert hazard_ratio(1.932) == pytest.approx(6.900, abs=0.005)
    assert hazard_ratio(0.0) == 1.0
    assert hazard_ratio(-0.594) == pytest.approx(0.552, abs=0.002)
    with pytest.raises(ContractError):
        hazard_ratio(float("inf"))


@pytest.mark.parametrize("stat,df,p", [(4.58, 2, 0.101), (5.93, 2, 0.052), (0.0003, 1, 0.986)])
def test_lrt_p_values(stat, df, p):
    assert lrt_from_logliks(0.0, stat / 2, df)[1] == pytest.approx(p, abs=0.001)


def test_chi2_upper_closed_forms():
    for x in (0.1, 1.0, 3.84, 10.0):
        assert chi2_upper(x, 2) == pytest.approx(math.exp(-x / 2), rel=1e-12)
        assert chi2_upper(x, 1) == pytest.approx(math.erfc(math.sqrt(x / 2)), rel=1e-12)


def test_lrt_self_and_nesting(vi_dataset):
    four = fit(vi_dataset, expand_preset("IV"))
    six = fit(vi_dataset, expand_preset("VI"))
    assert lrt(six, six) == (0.0, 1.0)
    stat, p = lrt(four, six)
    assert stat == pytest.approx(2 * (six.loglik_final - four.loglik_final))
    assert 0 <= p <= 1
    with pytest.raises(ContractError):
        lrt(six, four)
    with pytest.raises(ContractError):
        lrt_from_logliks(-1.0, -2.0, 1)


def test_json_round_trip(vi_dataset):
    res = fit(vi_dataset, expand_preset("VI"))
    text = coxfit.to_json(res, provenance="goalhazard test")
    back = coxfit.from_json(text)
    assert back.coefficients == res.coefficients
    np.testing.assert_array_equal(back.covariance, res.covariance)
    assert coxfit.to_json(back, provenance="goalhazard test").splitlines()[:30] == \
        text.splitlines()[:30]
    doc = coxfit.to_dict(res)
    assert set(doc["terms"]["Goal"]) == {"label", "coef", "exp_coef", "se", "z", "p"}
    assert doc["terms"]["TimeFromFirstGoal"]["label"] == "logTimeFromFirstGoal"


def test_table_layout(vi_dataset):
    table = coxfit.format_table(fit(vi_dataset, expand_preset("VI")))
    header = table.splitlines()[0].split()
    assert header == ["coef", "exp(coef)", "se(coef)", "z", "p"]
    assert len(table.splitlines()) == 1 + 5 + 1
