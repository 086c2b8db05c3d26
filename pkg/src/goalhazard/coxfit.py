"""Cox partial likelihood with left truncation, ties and time-dependent covariates."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import special

from . import _kernels
from .design import Design, make_design
from .ingest import Dataset
from .model import ContractError, FitResult, ModelSpec, MonotoneLikelihoodError

MAX_ITER = 25
REL_TOL = 1e-9
MAX_HALVINGS = 10
DIVERGENCE = 20.0


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class LikelihoodEval:
    loglik: float
    gradient: np.ndarray
    hessian: np.ndarray
    jump: np.ndarray
    jump_sq: np.ndarray
    jump_tied: np.ndarray
    score_terms: np.ndarray
    n_events: np.ndarray


def _as_design(data, spec: ModelSpec | None) -> Design:
    if isinstance(data, Design):
        return data
    if spec is None:
        raise ContractError("a ModelSpec is required when passing a Dataset")
    return make_design(data, spec)


def evaluate(design: Design, beta, ties: str | None = None, order: int = 2) -> LikelihoodEval:
    ties = ties or design.spec.ties_method
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (design.p,):
        raise ContractError(f"beta has shape {beta.shape}, expected ({design.p},)")
    bad, ll, g, H, jump, jump_sq, jump_tied, q, n_ev = _kernels.risk_sums(
        design, beta, ties == "efron", order)
    if bad >= 0:
        raise ContractError(
            f"risk-set denominator underflow/overflow at event time {design.ev_time[bad]:g}")
    return LikelihoodEval(ll, g, H, jump, jump_sq, jump_tied, q, n_ev)


def partial_loglik(data: Dataset | Design, spec: ModelSpec | None, beta):
    """Log partial likelihood, its gradient and Hessian at ``beta``."""
    design = _as_design(data, spec)
    if design.spec.frailty:
        raise ContractError("frailty specs are fitted by goalhazard.frailty")
    ev = evaluate(design, beta)
    return ev.loglik, ev.gradient, ev.hessian


def newton(design: Design, beta0=None, ties: str | None = None, max_iter: int = MAX_ITER,
           tol: float = REL_TOL):
    """Newton-Raphson with step-halving; returns ``(beta, eval, iterations, converged, history)``."""
    p = design.p
    beta = np.zeros(p) if beta0 is None else np.array(beta0, dtype=float)
    cur = evaluate(design, beta, ties)
    history = [cur.loglik]
    if p == 0:
        return beta, cur, 0, True, history
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        try:
            step = np.linalg.solve(-cur.hessian, cur.gradient)
        except np.linalg.LinAlgError:
            raise ContractError(
                "singular information matrix: a term has no variation in this dataset") from None
        full_step = float(np.max(np.abs(step)))
        new = None
        for _ in range(MAX_HALVINGS + 1):
            cand = beta + step
            try:
                trial = evaluate(design, cand, ties)
            except ContractError:
                trial = None
            if trial is not None and np.isfinite(trial.loglik) and trial.loglik >= cur.loglik:
                new = trial
                break
            step = step / 2
        if new is None:
            # no ascent left to rounding error
            converged = full_step < 1e-6
            break
        beta = cand
        delta = new.loglik - cur.loglik
        cur = new
        history.append(cur.loglik)
        big = np.flatnonzero(np.abs(beta) > DIVERGENCE)
        if big.size:
            raise MonotoneLikelihoodError(design.spec.terms[big[0]], float(beta[big[0]]))
        if abs(delta) / (abs(cur.loglik) + 1.0) < tol:
            converged = True
            break
    return beta, cur, it, converged, history


def covariance_from_hessian(hessian: np.ndarray) -> np.ndarray:
    if hessian.size == 0:
        return np.zeros((0, 0))
    cov = np.linalg.inv(-hessian)
    return (cov + cov.T) / 2


def fit(data: Dataset | Design, spec: ModelSpec | None = None) -> FitResult:
    """Maximise the partial likelihood of ``spec`` (frailty specs are delegated)."""
    design = _as_design(data, spec)
    spec = design.spec
    if spec.frailty:
        from .frailty import fit_frailty
        return fit_frailty(design)
    if not design.event.any():
        raise ContractError("dataset has no events")
    null = evaluate(design, np.zeros(design.p), order=0)
    beta, cur, iters, converged, history = newton(design)
    if not converged:
        warnings.warn(f"Newton-Raphson did not converge in {MAX_ITER} iterations",
                      ConvergenceWarning, stacklevel=2)
    return FitResult(
        spec=spec, coefficients=dict(zip(spec.terms, beta.tolist())),
        covariance=covariance_from_hessian(cur.hessian), loglik_null=null.loglik,
        loglik_final=cur.loglik, iterations=iters, converged=converged,
        n_rows=design.n, n_events=int(design.event.sum()), loglik_history=history)


def hazard_ratio(coef: float) -> float:
    if not math.isfinite(coef):
        raise ContractError("coefficient must be finite")
    return math.exp(coef)


def chi2_upper(statistic: float, df: int) -> float:
    """Upper tail of the chi-square distribution (regularised upper incomplete gamma)."""
    if df <= 0:
        raise ContractError("df must be positive")
    if statistic <= 0:
        return 1.0
    return float(special.gammaincc(df / 2.0, statistic / 2.0))


def normal_two_sided_p(z: float) -> float:
    if not np.isfinite(z):
        return float("nan")
    return float(special.erfc(abs(z) / math.sqrt(2.0)))


def lrt_from_logliks(loglik_nested: float, loglik_full: float, df: int) -> tuple[float, float]:
    stat = 2.0 * (loglik_full - loglik_nested)
    if stat < -1e-6:
        raise ContractError(
            f"negative likelihood-ratio statistic {stat:.3g}: models not nested or a fit failed")
    stat = max(stat, 0.0)
    return stat, chi2_upper(stat, df)


def lrt(nested: FitResult, full: FitResult, df: int | None = None) -> tuple[float, float]:
    """Likelihood-ratio test of ``nested`` against ``full``.

    ``df`` defaults to the difference in term counts, or 1 when the only
    difference is a frailty term.
    """
    if not set(nested.terms) <= set(full.terms):
        raise ContractError("nested model's terms are not a subset of the full model's")
    if nested.n_rows != full.n_rows:
        raise ContractError("fits were made on different datasets")
    if df is None:
        df = len(full.terms) - len(nested.terms)
        if full.spec.frailty and not nested.spec.frailty:
            df += 1
    nested_ll = nested.loglik_final
    if (full.spec.frailty and not nested.spec.frailty and set(nested.terms) == set(full.terms)
            and "reference_loglik" in full.frailty):
        # the frailty fit carries its own theta = 0 reference on the Breslow scale
        nested_ll = float(full.frailty["reference_loglik"])
    if df <= 0:
        stat = 2.0 * (full.loglik_final - nested_ll)
        if abs(stat) > 1e-6:
            raise ContractError("df must be positive for non-identical models")
        return 0.0, 1.0
    return lrt_from_logliks(nested_ll, full.loglik_final, df)


# ----------------------------------------------------------------- reporting

def coefficient_rows(result: FitResult) -> list[dict]:
    rows = []
    for term, b, se, z, p in zip(result.terms, result.beta, result.se, result.z,
                                 result.p_values):
        rows.append({"term": term, "label": result.spec.label(term), "coef": float(b),
                     "exp_coef": math.exp(b), "se": float(se), "z": float(z), "p": float(p)})
    return rows


def format_p(p: float) -> str:
    return "<0.001" if p < 0.001 else f"{p:.3f}"


def format_table(result: FitResult) -> str:
    rows = coefficient_rows(result)
    width = max([len(r["label"]) for r in rows] + [4])
    lines = [f"{'':<{width}} {'coef':>8} {'exp(coef)':>10} {'se(coef)':>9} {'z':>8} {'p':>7}"]
    for r in rows:
        lines.append(f"{r['label']:<{width}} {r['coef']:>8.3f} {r['exp_coef']:>10.3f} "
                     f"{r['se']:>9.3f} {r['z']:>8.3f} {format_p(r['p']):>7}")
    lines.append(f"loglik null {result.loglik_null:.4f}  final {result.loglik_final:.4f}  "
                 f"iterations {result.iterations}  converged {result.converged}")
    if result.frailty:
        f = result.frailty
        lines.append(f"frailty theta {f['theta']:.6g}  LRT {f['lrt_statistic']:.4f} "
                     f"on 1 df  p={f['p_value']:.3f}")
    return "\n".join(lines)


def to_dict(result: FitResult, provenance: str | None = None) -> dict:
    doc = {}
    if provenance:
        doc["provenance"] = provenance
    doc.update({
        "model": result.spec.name,
        "spec": result.spec.to_dict(),
        "terms": {r["term"]: {k: r[k] for k in ("label", "coef", "exp_coef", "se", "z", "p")}
                  for r in coefficient_rows(result)},
        "covariance": result.covariance.tolist(),
        "loglik_null": result.loglik_null,
        "loglik_final": result.loglik_final,
        "theta": result.theta,
        "iterations": result.iterations,
        "converged": result.converged,
        "n_rows": result.n_rows,
        "n_events": result.n_events,
    })
    if result.frailty:
        doc["frailty"] = {k: v for k, v in result.frailty.items() if k != "profile"}
        doc["frailty"]["profile"] = [list(map(float, pt))
                                     for pt in result.frailty.get("profile", [])]
        doc["frailty_values"] = result.frailty_values
    return doc


def to_json(result: FitResult, provenance: str | None = None) -> str:
    return json.dumps(to_dict(result, provenance), indent=2, allow_nan=True) + "\n"


def from_dict(doc: dict) -> FitResult:
    spec = ModelSpec.from_dict(doc["spec"])
    coefs = {t: float(doc["terms"][t]["coef"]) for t in spec.terms}
    return FitResult(
        spec=spec, coefficients=coefs,
        covariance=np.array(doc["covariance"], dtype=float).reshape(len(coefs), len(coefs)),
        loglik_null=float(doc["loglik_null"]), loglik_final=float(doc["loglik_final"]),
        iterations=int(doc["iterations"]), converged=bool(doc["converged"]),
        theta=float(doc.get("theta", 0.0)), frailty_values=dict(doc.get("frailty_values", {})),
        frailty=dict(doc.get("frailty", {})), n_rows=int(doc.get("n_rows", 0)),
        n_events=int(doc.get("n_events", 0)))


def from_json(text: str) -> FitResult:
    return from_dict(json.loads(text))
