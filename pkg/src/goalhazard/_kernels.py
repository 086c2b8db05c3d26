"""Risk-set sweeps shared by the Cox, frailty, baseline and residual code.

Each kernel exists twice: an explicit loop version compiled with numba and a
vectorised numpy version. ``GOALHAZARD_NUMBA=0`` (or numba being absent)
selects numpy; :func:`set_backend` switches at runtime for tests and
benchmarks. Both versions visit event times in the same order and must agree
to rounding error.

All kernels scan every row for every distinct event time. Goal times are
recorded in whole minutes, so there are at most a couple of hundred event
times and the scan is cheaper than maintaining sorted cumulative sums that
time-dependent covariates would invalidate anyway.
"""

from __future__ import annotations

import math
import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None


# ---------------------------------------------------------------- loop versions

def _risk_sums_loop(entry, exit_, event, stratum, X, offset, td_col, td_scale, tfirst,
                    is_j2, transform, ev_time, ev_stratum, beta, efron, order):
    n, p = X.shape
    T = ev_time.shape[0]
    loglik = 0.0
    grad = np.zeros(p)
    hess = np.zeros((p, p))
    jump = np.zeros(T)
    jump_sq = np.zeros(T)
    jump_tied = np.zeros(T)
    qvec = np.zeros((T, p))
    n_ev = np.zeros(T)
    x = np.empty(p)
    s1 = np.empty(p)
    s1d = np.empty(p)
    xsum = np.empty(p)
    s2 = np.empty((p, p))
    s2d = np.empty((p, p))
    for e in range(T):
        t = ev_time[e]
        st = ev_stratum[e]
        s0 = 0.0
        s0d = 0.0
        d = 0
        etasum = 0.0
        for k in range(p):
            s1[k] = 0.0
            s1d[k] = 0.0
            xsum[k] = 0.0
            for m in range(p):
                s2[k, m] = 0.0
                s2d[k, m] = 0.0
        for r in range(n):
            if stratum[r] != st or not (entry[r] < t <= exit_[r]):
                continue
            eta = offset[r]
            for k in range(p):
                x[k] = X[r, k]
            if td_col >= 0 and is_j2[r] == 1:
                u = t - tfirst[r]
                x[td_col] += td_scale * (math.log(u) if transform == 1 else u)
            for k in range(p):
                eta += x[k] * beta[k]
            w = math.exp(eta)
            tied = event[r] == 1 and exit_[r] == t
            s0 += w
            if tied:
                s0d += w
                d += 1
                etasum += eta
            if order >= 1:
                for k in range(p):
                    s1[k] += w * x[k]
                    if tied:
                        s1d[k] += w * x[k]
                        xsum[k] += x[k]
            if order >= 2:
                for k in range(p):
                    for m in range(k + 1):
                        v = w * x[k] * x[m]
                        s2[k, m] += v
                        if tied:
                            s2d[k, m] += v
        if not (s0 > 0.0 and s0 < np.inf):
            return e, loglik, grad, hess, jump, jump_sq, jump_tied, qvec, n_ev
        n_ev[e] = d
        loglik += etasum
        for k in range(p):
            grad[k] += xsum[k]
        for i in range(d):
            frac = i / d if efron else 0.0
            den = s0 - frac * s0d
            loglik -= math.log(den)
            jump[e] += 1.0 / den
            jump_sq[e] += 1.0 / (den * den)
            jump_tied[e] += (1.0 - frac) / den
            if order >= 1:
                for k in range(p):
                    num = s1[k] - frac * s1d[k]
                    grad[k] -= num / den
                    qvec[e, k] += num / (den * den)
            if order >= 2:
                for k in range(p):
                    ak = (s1[k] - frac * s1d[k]) / den
                    for m in range(k + 1):
                        am = (s1[m] - frac * s1d[m]) / den
                        hess[k, m] -= (s2[k, m] - frac * s2d[k, m]) / den - ak * am
    for k in range(p):
        for m in range(k):
            hess[m, k] = hess[k, m]
    return -1, loglik, grad, hess, jump, jump_sq, jump_tied, qvec, n_ev


def _row_cumhaz_loop(entry, exit_, event, stratum, X, offset, td_col, td_scale, tfirst,
                     is_j2, transform, ev_time, ev_stratum, beta, jump, jump_tied):
    n, p = X.shape
    out = np.zeros(n)
    for e in range(ev_time.shape[0]):
        t = ev_time[e]
        st = ev_stratum[e]
        for r in range(n):
            if stratum[r] != st or not (entry[r] < t <= exit_[r]):
                continue
            eta = offset[r]
            for k in range(p):
                xk = X[r, k]
                if k == td_col and is_j2[r] == 1:
                    u = t - tfirst[r]
                    xk += td_scale * (math.log(u) if transform == 1 else u)
                eta += xk * beta[k]
            w = math.exp(eta)
            if event[r] == 1 and exit_[r] == t:
                out[r] += w * jump_tied[e]
            else:
                out[r] += w * jump[e]
    return out


def _frailty_blocks_loop(entry, exit_, stratum, X, td_col, td_scale, tfirst, is_j2,
                         transform, ev_time, ev_stratum, beta, game, n_games, h):
    n, p = X.shape
    T = ev_time.shape[0]
    A = np.zeros((n_games, T))
    E = np.zeros((n_games, T, p))
    M = np.zeros((n_games, p, p))
    x = np.empty(p)
    for e in range(T):
        t = ev_time[e]
        st = ev_stratum[e]
        for r in range(n):
            if stratum[r] != st or not (entry[r] < t <= exit_[r]):
                continue
            eta = 0.0
            for k in range(p):
                x[k] = X[r, k]
            if td_col >= 0 and is_j2[r] == 1:
                u = t - tfirst[r]
                x[td_col] += td_scale * (math.log(u) if transform == 1 else u)
            for k in range(p):
                eta += x[k] * beta[k]
            w = math.exp(eta)
            g = game[r]
            A[g, e] += w
            for k in range(p):
                E[g, e, k] += w * x[k]
                for m in range(p):
                    M[g, k, m] += h[e] * w * x[k] * x[m]
    return A, E, M


# --------------------------------------------------------------- numpy versions

def _mask_and_x(entry, exit_, stratum, X, td_col, td_scale, tfirst, is_j2, transform, t, st):
    rows = np.flatnonzero((stratum == st) & (entry < t) & (t <= exit_))
    x = X[rows].copy()
    if td_col >= 0:
        j2 = is_j2[rows] == 1
        u = t - tfirst[rows][j2]
        x[j2, td_col] += td_scale * (np.log(u) if transform == 1 else u)
    return rows, x


def _risk_sums_numpy(entry, exit_, event, stratum, X, offset, td_col, td_scale, tfirst,
                     is_j2, transform, ev_time, ev_stratum, beta, efron, order):
    n, p = X.shape
    T = ev_time.shape[0]
    loglik = 0.0
    grad = np.zeros(p)
    hess = np.zeros((p, p))
    jump = np.zeros(T)
    jump_sq = np.zeros(T)
    jump_tied = np.zeros(T)
    qvec = np.zeros((T, p))
    n_ev = np.zeros(T)
    for e in range(T):
        t = ev_time[e]
        rows, x = _mask_and_x(entry, exit_, stratum, X, td_col, td_scale, tfirst, is_j2,
                              transform, t, ev_stratum[e])
        eta = offset[rows] + x @ beta
        w = np.exp(eta)
        tied = (event[rows] == 1) & (exit_[rows] == t)
        s0 = w.sum()
        if not (s0 > 0.0 and np.isfinite(s0)):
            return e, loglik, grad, hess, jump, jump_sq, jump_tied, qvec, n_ev
        d = int(tied.sum())
        n_ev[e] = d
        s0d = w[tied].sum()
        loglik += eta[tied].sum()
        frac = np.arange(d) / d if efron else np.zeros(d)
        den = s0 - frac * s0d
        loglik -= np.log(den).sum()
        jump[e] = (1.0 / den).sum()
        jump_sq[e] = (1.0 / den ** 2).sum()
        jump_tied[e] = ((1.0 - frac) / den).sum()
        if order >= 1:
            wx = w[:, None] * x
            s1 = wx.sum(0)
            s1d = wx[tied].sum(0)
            num = s1[None, :] - frac[:, None] * s1d[None, :]
            a = num / den[:, None]
            grad += x[tied].sum(0) - a.sum(0)
            qvec[e] = (num / den[:, None] ** 2).sum(0)
            if order >= 2:
                s2 = wx.T @ x
                s2d = wx[tied].T @ x[tied]
                for i in range(d):
                    hess -= (s2 - frac[i] * s2d) / den[i] - np.outer(a[i], a[i])
    return -1, loglik, grad, hess, jump, jump_sq, jump_tied, qvec, n_ev


def _row_cumhaz_numpy(entry, exit_, event, stratum, X, offset, td_col, td_scale, tfirst,
                      is_j2, transform, ev_time, ev_stratum, beta, jump, jump_tied):
    out = np.zeros(X.shape[0])
    for e in range(ev_time.shape[0]):
        t = ev_time[e]
        rows, x = _mask_and_x(entry, exit_, stratum, X, td_col, td_scale, tfirst, is_j2,
                              transform, t, ev_stratum[e])
        w = np.exp(offset[rows] + x @ beta)
        tied = (event[rows] == 1) & (exit_[rows] == t)
        out[rows] += w * np.where(tied, jump_tied[e], jump[e])
    return out


def _frailty_blocks_numpy(entry, exit_, stratum, X, td_col, td_scale, tfirst, is_j2,
                          transform, ev_time, ev_stratum, beta, game, n_games, h):
    p = X.shape[1]
    T = ev_time.shape[0]
    A = np.zeros((n_games, T))
    E = np.zeros((n_games, T, p))
    M = np.zeros((n_games, p, p))
    for e in range(T):
        rows, x = _mask_and_x(entry, exit_, stratum, X, td_col, td_scale, tfirst, is_j2,
                              transform, ev_time[e], ev_stratum[e])
        w = np.exp(x @ beta)
        g = game[rows]
        np.add.at(A[:, e], g, w)
        np.add.at(E[:, e, :], g, w[:, None] * x)
        np.add.at(M, g, h[e] * w[:, None, None] * x[:, :, None] * x[:, None, :])
    return A, E, M


# ------------------------------------------------------------------- dispatch

_NUMPY = {"risk_sums": _risk_sums_numpy, "row_cumhaz": _row_cumhaz_numpy,
          "frailty_blocks": _frailty_blocks_numpy}
_LOOPS = {"risk_sums": _risk_sums_loop, "row_cumhaz": _row_cumhaz_loop,
          "frailty_blocks": _frailty_blocks_loop}
_compiled: dict = {}


def numba_available() -> bool:
    return numba is not None


def _numba_impl(name):
    if name not in _compiled:
        _compiled[name] = numba.njit(cache=True, nogil=True)(_LOOPS[name])
    return _compiled[name]


def _default_backend() -> str:
    flag = os.environ.get("GOALHAZARD_NUMBA", "1").strip().lower()
    if flag in ("0", "false", "no", "off") or numba is None:
        return "numpy"
    return "numba"


_backend = _default_backend()


def get_backend() -> str:
    return _backend


def set_backend(name: str) -> None:
    """Select ``"numba"``, ``"numpy"`` or ``"python"`` (the uncompiled loops)."""
    global _backend
    if name not in ("numba", "numpy", "python"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and numba is None:
        raise RuntimeError("numba is not installed")
    _backend = name


def _impl(name):
    if _backend == "numba":
        return _numba_impl(name)
    if _backend == "python":
        return _LOOPS[name]
    return _NUMPY[name]


def risk_sums(design, beta, efron: bool, order: int = 2):
    d = design
    return _impl("risk_sums")(
        d.entry, d.exit, d.event, d.stratum, d.X, d.offset, d.td_col, d.td_scale,
        d.tfirst, d.is_j2, d.transform, d.ev_time, d.ev_stratum,
        np.ascontiguousarray(beta, dtype=np.float64), bool(efron), int(order))


def row_cumhaz(design, beta, jump, jump_tied, offset=None):
    d = design
    off = d.offset if offset is None else np.ascontiguousarray(offset, dtype=np.float64)
    return _impl("row_cumhaz")(
        d.entry, d.exit, d.event, d.stratum, d.X, off, d.td_col, d.td_scale, d.tfirst,
        d.is_j2, d.transform, d.ev_time, d.ev_stratum,
        np.ascontiguousarray(beta, dtype=np.float64), jump, jump_tied)


def frailty_blocks(design, beta, h):
    d = design
    return _impl("frailty_blocks")(
        d.entry, d.exit, d.stratum, d.X, d.td_col, d.td_scale, d.tfirst, d.is_j2,
        d.transform, d.ev_time, d.ev_stratum, np.ascontiguousarray(beta, dtype=np.float64),
        d.game, d.n_games, np.ascontiguousarray(h, dtype=np.float64))
