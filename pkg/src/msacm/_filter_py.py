"""Pure-Python filter kernels.

Reference implementations of the hot loops, used when the compiled
extension is unavailable (or forced via MSACM_PURE_PY=1).  Arithmetic
ordering matches ``_filter_core.pyx`` step for step so both backends
produce the same numbers.
"""

import math

import numpy as np

# status codes shared with the compiled kernel
OK = 0
NONPOSITIVE_MU = 1


def gamma_logpdf(y, mu, theta):
    """Log density at y of a Gamma with mean mu and shape theta."""
    return (
        theta * math.log(theta / mu)
        + (theta - 1.0) * math.log(y)
        - theta * y / mu
        - math.lgamma(theta)
    )


def base_recursion(omega, alpha, beta, gamma, rv, d, init):
    T = rv.shape[0]
    out = np.empty(T)
    sig = init
    out[0] = sig
    for t in range(1, T):
        sig = omega + alpha * rv[t - 1] + beta * sig + gamma * d[t - 1] * rv[t - 1]
        out[t] = sig
    return out


def acm_forward(rv, d, xdev, lamdev, omega, alpha, beta, gamma, delta,
                phi0, psi, phi_ann, theta, sigma0):
    """Single-regime forward pass: mean recursion plus Gamma log-likelihood.

    Returns (status, fail_t, loglik, step_ll, mu).  A non-positive
    conditional mean aborts with loglik = -inf and the offending index.
    """
    T = rv.shape[0]
    step_ll = np.full(T, -np.inf)
    mu_out = np.empty(T)
    sig = sigma0
    xi_prev = 0.0
    loglik = 0.0
    for t in range(T):
        if t > 0:
            sig = omega + alpha * rv[t - 1] + beta * sig + gamma * d[t - 1] * rv[t - 1]
        xi = phi0 + delta * xdev[t] + phi_ann * lamdev[t] + psi * xi_prev
        mu = sig + xi
        mu_out[t] = mu
        if mu <= 0.0:
            return NONPOSITIVE_MU, t, -np.inf, step_ll, mu_out
        ll = gamma_logpdf(rv[t], mu, theta)
        step_ll[t] = ll
        loglik += ll
        xi_prev = xi
    return OK, -1, loglik, step_ll, mu_out


def ms_forward(rv, d, xdev, omega, alpha, beta, gamma, delta, psi,
               intercepts, theta, trans, prob0, xi0, sigma0):
    """Hamilton filter forward pass with Kim's collapse of the policy state.

    prob0 is the distribution of the pre-sample regime, xi0 the pre-sample
    per-regime collapsed policy component.  Returns
    (status, fail_t, loglik, step_ll, predicted, filtered, xi_collapsed,
    mu_onestep, sigma, n_collapse_fallback).
    """
    T = rv.shape[0]
    K = theta.shape[0]
    predicted = np.zeros((T, K))
    filtered = np.zeros((T, K))
    xi_collapsed = np.zeros((T, K))
    mu_onestep = np.zeros(T)
    sigma = np.zeros(T)
    step_ll = np.full(T, -np.inf)

    xi_prev = [float(xi0[k]) for k in range(K)]
    prob_prev = [float(prob0[k]) for k in range(K)]
    xi_pair = [[0.0] * K for _ in range(K)]
    mu_pair = [[0.0] * K for _ in range(K)]
    a_pair = [[0.0] * K for _ in range(K)]
    post = [[0.0] * K for _ in range(K)]

    loglik = 0.0
    sig = sigma0
    n_fallback = 0

    for t in range(T):
        if t > 0:
            sig = omega + alpha * rv[t - 1] + beta * sig + gamma * d[t - 1] * rv[t - 1]
        sigma[t] = sig
        dev = delta * xdev[t]
        y = rv[t]

        for i in range(K):
            xi_i = psi * xi_prev[i]
            p_i = prob_prev[i]
            for j in range(K):
                xi_ij = intercepts[j] + dev + xi_i
                mu_ij = sig + xi_ij
                if mu_ij <= 0.0:
                    return (NONPOSITIVE_MU, t, -np.inf, step_ll, predicted,
                            filtered, xi_collapsed, mu_onestep, sigma, n_fallback)
                xi_pair[i][j] = xi_ij
                mu_pair[i][j] = mu_ij
                w = p_i * trans[i, j]
                if w > 0.0:
                    a_pair[i][j] = math.log(w) + gamma_logpdf(y, mu_ij, theta[j])
                else:
                    a_pair[i][j] = -math.inf
                predicted[t, j] += w
                mu_onestep[t] += w * mu_ij

        m = -math.inf
        for i in range(K):
            for j in range(K):
                if a_pair[i][j] > m:
                    m = a_pair[i][j]
        s = 0.0
        for i in range(K):
            for j in range(K):
                e = math.exp(a_pair[i][j] - m) if a_pair[i][j] > -math.inf else 0.0
                post[i][j] = e
                s += e
        ll = m + math.log(s)
        step_ll[t] = ll
        loglik += ll

        for j in range(K):
            fj = 0.0
            for i in range(K):
                post[i][j] /= s
                fj += post[i][j]
            filtered[t, j] = fj

        for j in range(K):
            fj = filtered[t, j]
            if fj > 0.0:
                num = 0.0
                for i in range(K):
                    num += post[i][j] * xi_pair[i][j]
                xi_collapsed[t, j] = num / fj
            else:
                # measure-zero branch: fall back to joint-weighted average
                num = 0.0
                for i in range(K):
                    for jj in range(K):
                        num += post[i][jj] * xi_pair[i][jj]
                xi_collapsed[t, j] = num
                n_fallback += 1

        for k in range(K):
            xi_prev[k] = xi_collapsed[t, k]
            prob_prev[k] = filtered[t, k]

    return (OK, -1, loglik, step_ll, predicted, filtered, xi_collapsed,
            mu_onestep, sigma, n_fallback)
