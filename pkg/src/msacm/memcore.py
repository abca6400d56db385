"""Shared multiplicative-error-model recursions.

Thin validated wrappers over the kernel backend.  All model variants
(AMEM, AMEMX, ACM, MS-ACM) share the Gamma log density and the base
volatility recursion defined here.
"""

import numpy as np

from ._backend import kernels
from .params import AcmParams  # noqa: F401  (re-export for convenience)

# observations used for the base-recursion start value
SIGMA_INIT_WINDOW = 50


def gamma_log_density(y, mu, theta):
    """Log density at y of a Gamma variable with mean mu and shape theta.

    theta * log(theta/mu) + (theta - 1) * log(y) - theta*y/mu - logGamma(theta).
    """
    if y <= 0 or mu <= 0 or theta <= 0:
        raise ValueError("gamma_log_density requires y, mu, theta > 0")
    return kernels.gamma_logpdf(float(y), float(mu), float(theta))


def base_recursion(params, rv, d, init):
    """Base volatility series: s[0] = init, then
    s[t] = omega + alpha*rv[t-1] + beta*s[t-1] + gamma*d[t-1]*rv[t-1]."""
    rv = np.ascontiguousarray(rv, dtype=float)
    d = np.ascontiguousarray(d, dtype=float)
    if rv.shape != d.shape:
        raise ValueError("rv and d must have equal length")
    if not init > 0:
        raise ValueError("init must be positive")
    return kernels.base_recursion(
        params.omega, params.alpha, params.beta, params.gamma, rv, d, float(init)
    )


def sigma_init(rv):
    """Start value for the base recursion: mean of the first 50 observations."""
    rv = np.asarray(rv, dtype=float)
    return float(np.mean(rv[:SIGMA_INIT_WINDOW]))


def _xdev(series, delta):
    if delta != 0.0:
        return np.ascontiguousarray(series.xdev())
    return np.zeros(len(series))


def acm_filter(params, series, announce_coef=None):
    """Single-regime filter: mu_t = base + policy component, Gamma loglik.

    With delta = psi = 0 and no announcement term this is the plain AMEM;
    adding delta only gives the AMEMX.  ``announce_coef`` switches on the
    phi*(lam - mean(lam)) announcement term.  A non-positive mu_t yields
    loglik = -inf (optimizer-friendly) rather than raising.

    Returns (mu, loglik).
    """
    _, _, loglik, _, mu = acm_filter_terms(params, series, announce_coef)
    return mu, loglik


def acm_filter_terms(params, series, announce_coef=None):
    """As acm_filter but returning (status, fail_t, loglik, step_ll, mu)."""
    rv = np.ascontiguousarray(series.rv)
    d = np.ascontiguousarray(series.d)
    xdev = _xdev(series, params.delta)
    coef = params.phi_ann if params.phi_ann is not None else announce_coef
    if coef is not None:
        lamdev = np.ascontiguousarray(series.lam - series.lam.mean())
        phi_ann = float(coef)
    else:
        lamdev = np.zeros(len(series))
        phi_ann = 0.0
    return kernels.acm_forward(
        rv, d, xdev, lamdev,
        params.base.omega, params.base.alpha, params.base.beta, params.base.gamma,
        params.delta, params.phi0, params.psi, phi_ann, float(params.theta),
        sigma_init(rv),
    )
