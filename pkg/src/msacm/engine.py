"""Markov-switching filter, smoother, exact-enumeration oracle, simulator.

The forward pass is the Hamilton filter with Kim's collapsing step: the
K x K regime-pair values of the policy component are averaged into K
per-regime values each period using the joint posterior
Pr[s_{t-1}=i, s_t=j | I_t], which breaks the path dependence introduced
by the AR term.  ``exact_path_loglik`` sums the likelihood over every
regime path without collapsing and is the test oracle for that
approximation.
"""

import csv
import datetime as dt
import math
from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .memcore import sigma_init
from .params import MsAcmParams, ParameterError
from .series import MarketSeries

# exact_path_loglik refuses above this many regime paths
MAX_EXACT_PATHS = 2 ** 20


@dataclass(frozen=True)
class FilterOutput:
    """Forward/backward pass results.

    predicted[t, j] = Pr[s_t = j | I_{t-1}], filtered conditions on I_t,
    smoothed on the full sample.  ``xi_collapsed`` holds the per-regime
    collapsed policy components, ``mu_onestep`` the one-step conditional
    mean E[mu_t | I_{t-1}], ``sigma`` the base component, ``step_loglik``
    the per-period log normalizing constants (summing to ``loglik``).
    """

    loglik: float
    predicted: np.ndarray
    filtered: np.ndarray
    smoothed: np.ndarray
    xi_collapsed: np.ndarray
    mu_onestep: np.ndarray
    sigma: np.ndarray
    step_loglik: np.ndarray
    fail_index: int = -1
    n_collapse_fallback: int = 0

    @property
    def ok(self):
        return self.fail_index < 0


@dataclass(frozen=True)
class SimulatedPath:
    series: MarketSeries
    states: np.ndarray
    xi_true: np.ndarray
    mu_true: np.ndarray


def ergodic_distribution(trans):
    """Stationary distribution pi with pi P = pi, sum(pi) = 1.

    Solved as the normalized null-space vector of (P^T - I); a null space
    of dimension != 1 (reducible or otherwise degenerate chain) raises.
    """
    P = np.asarray(trans, dtype=float)
    K = P.shape[0]
    _, s, vt = np.linalg.svd(P.T - np.eye(K))
    tol = K * np.finfo(float).eps * max(1.0, s[0])
    null_dim = int(np.sum(s < math.sqrt(tol) + 1e-10))
    if null_dim != 1:
        raise np.linalg.LinAlgError(
            f"chain is degenerate: null space of (P^T - I) has dimension {null_dim}"
        )
    pi = vt[-1]
    pi = pi / pi.sum()
    if (pi < -1e-10).any():
        raise np.linalg.LinAlgError("stationary vector has negative entries")
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def expected_durations(trans):
    """Expected sojourn in days per regime, 1/(1 - p_ii); inf when p_ii = 1."""
    P = np.asarray(trans, dtype=float)
    diag = np.diag(P)
    out = np.empty(diag.shape[0])
    for i, p in enumerate(diag):
        out[i] = math.inf if p >= 1.0 else 1.0 / (1.0 - p)
    return out


def _initial_state(params):
    """Pre-sample regime distribution and per-regime policy start values."""
    pi0 = ergodic_distribution(params.trans)
    xi0 = params.intercepts() / (1.0 - params.policy.psi)
    return pi0, np.ascontiguousarray(xi0)


def _xdev_series(series, delta):
    if delta != 0.0:
        return np.ascontiguousarray(series.xdev())
    return np.zeros(len(series))


def hamilton_kim_filter(params, series, smooth=True):
    """Run the collapsed forward filter (and Kim smoother) on a series."""
    pi0, xi0 = _initial_state(params)
    rv = np.ascontiguousarray(series.rv)
    d = np.ascontiguousarray(series.d)
    xdev = _xdev_series(series, params.policy.delta)
    (status, fail_t, loglik, step_ll, predicted, filtered, xi_collapsed,
     mu_onestep, sigma, n_fallback) = kernels.ms_forward(
        rv, d, xdev,
        params.base.omega, params.base.alpha, params.base.beta, params.base.gamma,
        params.policy.delta, params.policy.psi,
        np.ascontiguousarray(params.intercepts()), params.theta, params.trans,
        np.ascontiguousarray(pi0), xi0, sigma_init(rv),
    )
    if status == kernels.OK and smooth:
        smoothed = kim_smoother(params.trans, predicted, filtered)
    else:
        smoothed = np.full_like(filtered, np.nan)
    return FilterOutput(
        loglik=loglik, predicted=predicted, filtered=filtered, smoothed=smoothed,
        xi_collapsed=xi_collapsed, mu_onestep=mu_onestep, sigma=sigma,
        step_loglik=step_ll, fail_index=fail_t, n_collapse_fallback=n_fallback,
    )


def kim_smoother(trans, predicted, filtered):
    """Backward recursion
    smoothed[t, j] = filtered[t, j] * sum_k trans[j, k] * smoothed[t+1, k] / predicted[t+1, k]."""
    T, K = filtered.shape
    smoothed = np.empty_like(filtered)
    smoothed[T - 1] = filtered[T - 1]
    for t in range(T - 2, -1, -1):
        ratio = np.divide(
            smoothed[t + 1], predicted[t + 1],
            out=np.zeros(K), where=predicted[t + 1] > 0,
        )
        smoothed[t] = filtered[t] * (trans @ ratio)
    return smoothed


def exact_path_loglik(params, series):
    """Exact log-likelihood by enumerating every regime path.

    Propagates the policy component along each path without collapsing,
    including the pre-sample regime drawn from the ergodic distribution,
    so with psi = 0 it coincides with the collapsed filter exactly.
    Only for short series: refuses when K**T exceeds 2**20.
    """
    K = params.n_regimes
    T = len(series)
    if K ** T > MAX_EXACT_PATHS:
        raise ValueError(f"path enumeration too large: {K}**{T} > {MAX_EXACT_PATHS}")

    pi0, xi0 = _initial_state(params)
    rv = series.rv
    xdev = _xdev_series(series, params.policy.delta)
    sigma = kernels.base_recursion(
        params.base.omega, params.base.alpha, params.base.beta, params.base.gamma,
        np.ascontiguousarray(rv), np.ascontiguousarray(series.d), sigma_init(rv),
    )
    intercepts = params.intercepts()
    psi = params.policy.psi
    delta = params.policy.delta
    theta = params.theta
    with np.errstate(divide="ignore"):
        logtrans = np.log(params.trans)

    # paths over (s_{-1}, s_0, ..., s_{T-1}); arrays grow by a factor K per step
    with np.errstate(divide="ignore"):
        logw = np.log(pi0)
    xi = xi0.copy()
    state = np.arange(K)
    for t in range(T):
        P = logw.shape[0]
        new_logw = np.empty(P * K)
        new_xi = np.empty(P * K)
        new_state = np.empty(P * K, dtype=int)
        for j in range(K):
            xi_j = intercepts[j] + delta * xdev[t] + psi * xi
            mu_j = sigma[t] + xi_j
            if (mu_j <= 0).any():
                return -math.inf
            dens = (
                theta[j] * np.log(theta[j] / mu_j)
                + (theta[j] - 1.0) * math.log(rv[t])
                - theta[j] * rv[t] / mu_j
                - math.lgamma(theta[j])
            )
            sl = slice(j * P, (j + 1) * P)
            new_logw[sl] = logw + logtrans[state, j] + dens
            new_xi[sl] = xi_j
            new_state[sl] = j
        logw, xi, state = new_logw, new_xi, new_state

    m = logw.max()
    if not np.isfinite(m):
        return -math.inf
    return float(m + math.log(np.exp(logw - m).sum()))


@dataclass(frozen=True)
class ExoSpec:
    """Exogenous proxy-deviation process for the simulator.

    kind 'zero' keeps the deviation at 0; 'ar1' draws an AR(1) with the
    given coefficient and innovation scale, started at its stationary law.
    """

    kind: str = "zero"
    coef: float = 0.0
    scale: float = 0.0

    def __post_init__(self):
        if self.kind not in ("zero", "ar1"):
            raise ValueError(f"unknown exo kind {self.kind!r}")
        if self.kind == "ar1" and not abs(self.coef) < 1:
            raise ValueError("ar1 coefficient must satisfy |coef| < 1")


def simulate(params, T, exo=ExoSpec(), seed=0, q_neg=0.5, init_state=None,
             burn=200, start_date=dt.date(2010, 1, 1)):
    """Draw a path from the model: regimes from the chain (started at its
    ergodic distribution unless ``init_state`` pins the start), Gamma errors
    with unit mean, Bernoulli(q_neg) asymmetry dummies, and the full
    path-dependent policy component (no collapsing).  The first ``burn``
    draws are discarded so the returned slice is close to stationary.
    """
    if T < 2:
        raise ValueError("T must be >= 2")
    if not isinstance(params, MsAcmParams):
        raise ParameterError("simulate requires MsAcmParams")
    K = params.n_regimes
    rng = np.random.default_rng(seed)
    base = params.base
    intercepts = params.intercepts()
    psi, delta = params.policy.psi, params.policy.delta

    n = burn + T
    if init_state is None:
        pi0 = ergodic_distribution(params.trans)
        s_pre = int(rng.choice(K, p=pi0))
    else:
        s_pre = int(init_state)
    states = np.empty(n, dtype=int)
    s_prev = s_pre
    for t in range(n):
        s_prev = int(rng.choice(K, p=params.trans[s_prev]))
        states[t] = s_prev

    if exo.kind == "ar1":
        sd0 = exo.scale / math.sqrt(1.0 - exo.coef ** 2) if exo.scale > 0 else 0.0
        xdev = np.empty(n)
        xdev[0] = sd0 * rng.standard_normal()
        eps_x = exo.scale * rng.standard_normal(n - 1)
        for t in range(1, n):
            xdev[t] = exo.coef * xdev[t - 1] + eps_x[t - 1]
    else:
        xdev = np.zeros(n)

    d = (rng.random(n) < q_neg).astype(float)
    eps = rng.gamma(params.theta[states], 1.0 / params.theta[states])

    rv = np.empty(n)
    xi = np.empty(n)
    mu = np.empty(n)
    sig = base.omega / (1.0 - base.persistence)
    xi_prev = float(intercepts[s_pre] / (1.0 - psi))
    for t in range(n):
        if t > 0:
            sig = (base.omega + base.alpha * rv[t - 1] + base.beta * sig
                   + base.gamma * d[t - 1] * rv[t - 1])
        xi[t] = intercepts[states[t]] + delta * xdev[t] + psi * xi_prev
        mu[t] = sig + xi[t]
        if mu[t] <= 0:
            raise ParameterError(
                f"simulated conditional mean non-positive at step {t}; "
                "reduce |delta| or the exo scale"
            )
        rv[t] = mu[t] * eps[t]
        xi_prev = xi[t]

    sl = slice(burn, None)
    dates = tuple(start_date + dt.timedelta(days=int(i)) for i in range(T))
    series = MarketSeries(
        dates=dates, rv=rv[sl], d=d[sl],
        x=xdev[sl].copy(), x_hat=xdev[sl].copy(), x_bar=0.0,
        lam=np.zeros(T),
    )
    return SimulatedPath(series=series, states=states[sl].copy(),
                         xi_true=xi[sl].copy(), mu_true=mu[sl].copy())


def write_filter_csv(fo, dates, path, header_lines=()):
    """Serialize a FilterOutput, one row per day."""
    K = fo.filtered.shape[1]
    cols = (["date"]
            + [f"predicted_{j}" for j in range(K)]
            + [f"filtered_{j}" for j in range(K)]
            + [f"smoothed_{j}" for j in range(K)]
            + ["mu_onestep"])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(cols)
        for t, date in enumerate(dates):
            row = [date.isoformat()]
            row += [repr(float(v)) for v in fo.predicted[t]]
            row += [repr(float(v)) for v in fo.filtered[t]]
            row += [repr(float(v)) for v in fo.smoothed[t]]
            row.append(repr(float(fo.mu_onestep[t])))
            writer.writerow(row)
