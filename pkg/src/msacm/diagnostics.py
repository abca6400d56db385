"""Residual-based model checking.

Residuals of a multiplicative error model are rv_t divided by the
one-step-ahead conditional mean; under a correct specification they are
unit-mean Gamma draws (a mixture across regimes, weighted by the ergodic
probabilities).  Checks: Ljung-Box autocorrelation tests, an exact
Kolmogorov-Smirnov statistic against the ergodic Gamma mixture, and lag-1
cross-correlations across markets.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammainc, gammaincc

# asymptotic Kolmogorov constants at the 10% / 5% / 1% levels
KS_CONSTANTS = {0.10: 1.22, 0.05: 1.36, 0.01: 1.63}


@dataclass(frozen=True)
class ResidualReport:
    residuals: np.ndarray
    mean: float
    sd: float
    lb_stats: dict
    lb_pvalues: dict
    ks_stat: float
    ks_thresholds: dict


def residuals(fit, filter_output, series, kind="onestep"):
    """Multiplicative residuals rv_t / E[mu_t | I_{t-1}].

    ``kind='smoothed'`` divides by the full-sample smoothed mean instead
    (sum over regimes of smoothed probability times the collapsed mean).
    """
    if kind == "onestep":
        mu = filter_output.mu_onestep
    elif kind == "smoothed":
        mu_regime = filter_output.sigma[:, None] + filter_output.xi_collapsed
        mu = (filter_output.smoothed * mu_regime).sum(axis=1)
    else:
        raise ValueError(f"unknown residual kind {kind!r}")
    return series.rv / mu


def acm_residuals(series, mu):
    """Residuals for the single-regime variants, where mu is the filter mean."""
    return series.rv / np.asarray(mu)


def autocorrelations(x, max_lag):
    x = np.asarray(x, dtype=float)
    xc = x - x.mean()
    denom = float(xc @ xc)
    return np.array([float(xc[l:] @ xc[:-l]) / denom for l in range(1, max_lag + 1)])


def ljung_box(resid, lags=(1, 5, 10)):
    """Q(L) = T (T+2) sum_{l<=L} acf_l^2 / (T-l) with chi-square(L) upper-tail
    p-values via the regularized incomplete gamma function.

    Returns {lag: (statistic, p_value)}.
    """
    x = np.asarray(resid, dtype=float)
    T = x.shape[0]
    max_lag = max(lags)
    if max_lag >= T:
        raise ValueError(f"lag {max_lag} requires more than {max_lag} observations")
    acf = autocorrelations(x, max_lag)
    out = {}
    for L in sorted(lags):
        q = T * (T + 2.0) * float(sum(acf[l - 1] ** 2 / (T - l) for l in range(1, L + 1)))
        pval = float(gammaincc(L / 2.0, q / 2.0))
        out[L] = (q, pval)
    return out


def chi2_cdf(x, dof):
    """Chi-square CDF via the regularized lower incomplete gamma."""
    return float(gammainc(dof / 2.0, x / 2.0))


def gamma_mixture_cdf(x, theta, pi):
    """CDF of a mixture of unit-mean Gammas with shapes theta, weights pi."""
    x = np.asarray(x, dtype=float)
    theta = np.asarray(theta, dtype=float)
    pi = np.asarray(pi, dtype=float)
    out = np.zeros_like(x, dtype=float)
    for th, w in zip(theta, pi):
        out += w * gammainc(th, th * np.clip(x, 0.0, None))
    return out


def ks_mixture_gamma(resid, theta, pi):
    """Exact KS statistic of the residuals against the ergodic Gamma mixture.

    Returns (statistic, {level: critical value}) with the asymptotic
    critical values c / sqrt(T).
    """
    x = np.sort(np.asarray(resid, dtype=float))
    if (x <= 0).any():
        raise ValueError("residuals must be positive")
    pi = np.asarray(pi, dtype=float)
    if abs(pi.sum() - 1.0) > 1e-8:
        raise ValueError("mixture weights must sum to 1")
    T = x.shape[0]
    F = gamma_mixture_cdf(x, theta, pi)
    grid = np.arange(1, T + 1) / T
    stat = float(np.max(np.maximum(np.abs(grid - F), np.abs(F - (grid - 1.0 / T)))))
    thresholds = {level: c / math.sqrt(T) for level, c in KS_CONSTANTS.items()}
    return stat, thresholds


def cross_correlation_lag1(residual_sets):
    """corr(eps^a_t, eps^b_{t-1}) for every ordered pair of markets.

    ``residual_sets`` maps market name to (dates, residuals); the date
    tuples must agree exactly across markets.
    """
    names = list(residual_sets)
    ref_dates = residual_sets[names[0]][0]
    for name in names[1:]:
        dates = residual_sets[name][0]
        if tuple(dates) != tuple(ref_dates):
            diff = sorted(set(dates) ^ set(ref_dates))
            raise ValueError(f"date misalignment for {name}: {[str(d) for d in diff[:5]]}")
    out = {}
    for a in names:
        for b in names:
            if a == b:
                continue
            ra = np.asarray(residual_sets[a][1], dtype=float)
            rb = np.asarray(residual_sets[b][1], dtype=float)
            out[(a, b)] = float(np.corrcoef(ra[1:], rb[:-1])[0, 1])
    return out


def build_residual_report(fit, filter_output, series, theta, pi,
                          lags=(1, 5, 10), kind="onestep"):
    eps = residuals(fit, filter_output, series, kind=kind)
    lb = ljung_box(eps, lags)
    ks_stat, thresholds = ks_mixture_gamma(eps, theta, pi)
    return ResidualReport(
        residuals=eps,
        mean=float(eps.mean()),
        sd=float(eps.std(ddof=1)),
        lb_stats={L: round(v[0], 12) for L, v in lb.items()},
        lb_pvalues={L: v[1] for L, v in lb.items()},
        ks_stat=ks_stat,
        ks_thresholds=thresholds,
    )
