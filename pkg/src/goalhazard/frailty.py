"""Shared gamma frailty per game: EM at fixed variance, profile search over it.

The frailty of game ``i`` is ``Z_i ~ Gamma(1/theta, rate 1/theta)``. With a
Breslow (jump) baseline ``h`` the frailty integrates out in closed form and
the observable log-likelihood of a game with ``D_i`` events and hazard load
``C_i`` is::

    sum_events (log h_t + eta) + log G(k + D_i) - log G(k) + k log k
        - (k + D_i) log(k + C_i),      k = 1 / theta

which tends to the ordinary Breslow profile likelihood as ``theta -> 0``.
Log-likelihoods reported here are shifted by the data constant
``sum_t d_t log d_t - D`` so that, at ``theta = 0``, they equal the Breslow
partial log-likelihood and compare directly with ordinary fits.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .coxfit import MAX_HALVINGS, chi2_upper, evaluate, newton
from .design import Design, make_design
from .ingest import Dataset
from .model import ContractError, FitResult, ModelSpec

THETA_BOUNDS = (1e-6, 10.0)
LOG_THETA_TOL = 1e-4
EM_TOL = 1e-8
EM_MAX_ITER = 2000
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class FrailtyBoundaryWarning(UserWarning):
    pass


@dataclass
class EMState:
    theta: float
    beta: np.ndarray
    jumps: np.ndarray            # Breslow increments per event time
    posterior_means: np.ndarray  # per game
    loglik: float                # observable log-likelihood (partial-likelihood scale)
    load: np.ndarray             # C_i per game
    iterations: int = 0
    history: list | None = None


def _game_sums(design: Design, per_row: np.ndarray) -> np.ndarray:
    return np.bincount(design.game, weights=per_row, minlength=design.n_games)


def _events_per_game(design: Design) -> np.ndarray:
    return _game_sums(design, design.event.astype(float))


def breslow_constant(design: Design) -> float:
    """``sum_t d_t log d_t - D``: the gap between the Breslow profile likelihood
    and the partial likelihood."""
    counts = design.ev_count
    return float(np.sum(counts * np.log(counts)) - counts.sum())


def game_log_terms(theta: float, events: np.ndarray, load: np.ndarray) -> np.ndarray:
    """Per-game frailty contribution ``log E[Z^D exp(-Z C)]``.

    ``events`` are small integers, so the gamma-function ratio is expanded as a
    product, which stays accurate as ``theta -> 0``.
    """
    if theta == 0.0:
        return -load
    k = 1.0 / theta
    out = -k * np.log1p(load / k)
    for m in range(int(events.max(initial=0))):
        sel = events > m
        out[sel] += np.log1p((m - load[sel]) / (k + load[sel]))
    return out


def posterior_means(theta: float, events: np.ndarray, load: np.ndarray) -> np.ndarray:
    """``E[Z_i | data] = (1/theta + D_i) / (1/theta + C_i)``."""
    if np.any(load <= 0):
        bad = int(np.flatnonzero(load <= 0)[0])
        raise ContractError(f"game index {bad} has no hazard exposure (C_i <= 0)")
    if theta == 0.0:
        return np.ones_like(load)
    k = 1.0 / theta
    return (k + events) / (k + load)


def observable_loglik(design: Design, theta: float, beta: np.ndarray,
                      jumps: np.ndarray) -> tuple[float, np.ndarray]:
    """Integrated log-likelihood at ``(theta, beta, jumps)`` and the per-game loads."""
    load = _game_sums(design, _kernels.row_cumhaz(design, beta, jumps, jumps,
                                                   offset=np.zeros(design.n)))
    n_ev = design.ev_count
    events_part = float(np.sum(n_ev * np.log(jumps))) + float(
        design.event_linear_predictor(beta).sum())
    ll = events_part + float(game_log_terms(theta, _events_per_game(design), load).sum())
    return ll - breslow_constant(design), load


def em_step(design: Design, theta: float, beta: np.ndarray, post: np.ndarray) -> EMState:
    """One generalised EM iteration at fixed ``theta``.

    M-step: a Newton step (with step-halving) on the Breslow partial
    likelihood with ``log post`` offsets, then the Breslow baseline at the new
    coefficients. E-step: posterior frailty means under the new parameters.
    """
    if theta <= 0:
        raise ContractError("theta must be positive")
    offset = np.log(post)[design.game]
    dz = design.with_offset(offset)
    cur = evaluate(dz, beta, ties="breslow", order=2 if design.p else 0)
    ev = cur
    if design.p:
        step = np.linalg.solve(-cur.hessian, cur.gradient)
        for _ in range(MAX_HALVINGS + 1):
            trial = evaluate(dz, beta + step, ties="breslow", order=0)
            if trial.loglik >= cur.loglik:
                beta, ev = beta + step, trial
                break
            step = step / 2
    ll, load = observable_loglik(design, theta, beta, ev.jump)
    new_post = posterior_means(theta, _events_per_game(design), load)
    return EMState(theta, beta, ev.jump, new_post, ll, load)


def em_at_theta(design: Design, theta: float, beta0=None, post0=None,
                tol: float = EM_TOL, max_iter: int = EM_MAX_ITER) -> EMState:
    """Iterate :func:`em_step` until the observable log-likelihood settles."""
    beta = np.zeros(design.p) if beta0 is None else np.asarray(beta0, dtype=float)
    post = np.ones(design.n_games) if post0 is None else np.asarray(post0, dtype=float)
    history = []
    state = None
    for it in range(1, max_iter + 1):
        state = em_step(design, theta, beta, post)
        history.append(state.loglik)
        beta, post = state.beta, state.posterior_means
        if it > 1 and abs(history[-1] - history[-2]) < tol:
            break
    state.iterations = it
    state.history = history
    return state


def _frailty_information(design: Design, state: EMState) -> np.ndarray:
    """Observed information of the integrated likelihood over (beta, jumps)."""
    p = design.p
    T = state.jumps.size
    h = state.jumps
    A, E, M = _kernels.frailty_blocks(design, state.beta, h)
    B = np.einsum("gtp,t->gp", E, h)
    D = _events_per_game(design)
    C = state.load
    if state.theta == 0.0:
        c1, c2 = np.ones_like(C), np.zeros_like(C)
    else:
        k = 1.0 / state.theta
        c1 = (k + D) / (k + C)
        c2 = (k + D) / (k + C) ** 2
    H = np.zeros((p + T, p + T))
    H[:p, :p] = np.einsum("g,gi,gj->ij", c2, B, B) - np.einsum("g,gij->ij", c1, M)
    H[:p, p:] = np.einsum("g,gi,gt->it", c2, B, A) - np.einsum("g,gti->it", c1, E)
    H[p:, :p] = H[:p, p:].T
    H[p:, p:] = np.einsum("g,gt,gs->ts", c2, A, A) - np.diag(design.ev_count / h ** 2)
    return -H


def frailty_covariance(design: Design, state: EMState) -> np.ndarray:
    """Coefficient covariance at fixed theta, baseline jumps profiled out."""
    if design.p == 0:
        return np.zeros((0, 0))
    cov = np.linalg.inv(_frailty_information(design, state))[:design.p, :design.p]
    return (cov + cov.T) / 2


def golden_section_max(f, lo: float, hi: float, tol: float):
    """Maximise a unimodal ``f`` on ``[lo, hi]``; returns ``(x, f(x))``."""
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    return (c, fc) if fc >= fd else (d, fd)


def fit_frailty(data: Dataset | Design, spec: ModelSpec | None = None) -> FitResult:
    """Profile the observable likelihood over ``log theta`` by golden section."""
    design = data if isinstance(data, Design) else make_design(data, spec)
    spec = design.spec
    if not spec.frailty:
        raise ContractError("fit_frailty needs a spec with frailty=True")
    if not design.event.any():
        raise ContractError("dataset has no events")

    # theta = 0 reference: the ordinary Breslow fit
    base_beta, base_eval, _, base_conv, _ = newton(design, ties="breslow")
    ref_ll, ref_load = observable_loglik(design, 0.0, base_beta, base_eval.jump)
    null_ll = evaluate(design, np.zeros(design.p), ties="breslow", order=0).loglik

    states: dict[float, EMState] = {}
    profile = []

    def profile_ll(log_theta: float) -> float:
        theta = math.exp(log_theta)
        if states:
            nearest = min(states, key=lambda u: abs(u - log_theta))
            warm = states[nearest]
            beta0, post0 = warm.beta, warm.posterior_means
        else:
            beta0, post0 = base_beta, None
        st = em_at_theta(design, theta, beta0, post0)
        states[log_theta] = st
        profile.append((theta, st.loglik))
        return st.loglik

    lo, hi = (math.log(b) for b in THETA_BOUNDS)
    u_hat, ll_hat = golden_section_max(profile_ll, lo, hi, LOG_THETA_TOL)
    state = states[u_hat]
    at_upper = u_hat > hi - 10 * LOG_THETA_TOL
    if at_upper:
        warnings.warn(f"frailty profile maximum at the upper bound theta={THETA_BOUNDS[1]}",
                      FrailtyBoundaryWarning, stacklevel=2)
    stat = max(2.0 * (ll_hat - ref_ll), 0.0)
    cov = frailty_covariance(design, state)
    profile.sort()
    return FitResult(
        spec=spec, coefficients=dict(zip(spec.terms, state.beta.tolist())), covariance=cov,
        loglik_null=null_ll, loglik_final=ll_hat, iterations=state.iterations,
        converged=bool(base_conv and not at_upper), theta=state.theta,
        frailty_values=dict(zip(design.game_ids, state.posterior_means.tolist())),
        frailty={"theta": state.theta, "lrt_statistic": stat,
                 "p_value": chi2_upper(stat, 1), "reference_loglik": ref_ll,
                 "at_upper_bound": bool(at_upper), "em_iterations": state.iterations,
                 "profile": profile},
        n_rows=design.n, n_events=int(design.event.sum()), loglik_history=state.history)
