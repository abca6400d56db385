# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled filter kernels.

Mirrors ``_filter_py`` exactly (same signatures, same arithmetic order);
see that module for documentation.
"""

from libc.math cimport exp, lgamma, log, INFINITY

import numpy as np

OK = 0
NONPOSITIVE_MU = 1

DEF KMAX = 8


cdef inline double _gamma_logpdf(double y, double mu, double theta) nogil:
    return theta * log(theta / mu) + (theta - 1.0) * log(y) - theta * y / mu - lgamma(theta)


def gamma_logpdf(double y, double mu, double theta):
    """Log density at y of a Gamma with mean mu and shape theta."""
    return _gamma_logpdf(y, mu, theta)


def base_recursion(double omega, double alpha, double beta, double gamma,
                   double[::1] rv, double[::1] d, double init):
    cdef Py_ssize_t T = rv.shape[0]
    out_arr = np.empty(T)
    cdef double[::1] out = out_arr
    cdef double sig = init
    cdef Py_ssize_t t
    out[0] = sig
    for t in range(1, T):
        sig = omega + alpha * rv[t - 1] + beta * sig + gamma * d[t - 1] * rv[t - 1]
        out[t] = sig
    return out_arr


def acm_forward(double[::1] rv, double[::1] d, double[::1] xdev, double[::1] lamdev,
                double omega, double alpha, double beta, double gamma, double delta,
                double phi0, double psi, double phi_ann, double theta, double sigma0):
    cdef Py_ssize_t T = rv.shape[0]
    step_ll_arr = np.full(T, -np.inf)
    mu_arr = np.empty(T)
    cdef double[::1] step_ll = step_ll_arr
    cdef double[::1] mu_out = mu_arr
    cdef double sig = sigma0
    cdef double xi_prev = 0.0
    cdef double loglik = 0.0
    cdef double xi, mu, ll
    cdef Py_ssize_t t
    for t in range(T):
        if t > 0:
            sig = omega + alpha * rv[t - 1] + beta * sig + gamma * d[t - 1] * rv[t - 1]
        xi = phi0 + delta * xdev[t] + phi_ann * lamdev[t] + psi * xi_prev
        mu = sig + xi
        mu_out[t] = mu
        if mu <= 0.0:
            return NONPOSITIVE_MU, t, -np.inf, step_ll_arr, mu_arr
        ll = _gamma_logpdf(rv[t], mu, theta)
        step_ll[t] = ll
        loglik += ll
        xi_prev = xi
    return OK, -1, loglik, step_ll_arr, mu_arr


def ms_forward(double[::1] rv, double[::1] d, double[::1] xdev,
               double omega, double alpha, double beta, double gamma,
               double delta, double psi,
               double[::1] intercepts, double[::1] theta, double[:, ::1] trans,
               double[::1] prob0, double[::1] xi0, double sigma0):
    cdef Py_ssize_t T = rv.shape[0]
    cdef Py_ssize_t K = theta.shape[0]
    if K > KMAX:
        raise ValueError("regime count exceeds compiled kernel limit")

    predicted_arr = np.zeros((T, K))
    filtered_arr = np.zeros((T, K))
    xi_collapsed_arr = np.zeros((T, K))
    mu_onestep_arr = np.zeros(T)
    sigma_arr = np.zeros(T)
    step_ll_arr = np.full(T, -np.inf)
    cdef double[:, ::1] predicted = predicted_arr
    cdef double[:, ::1] filtered = filtered_arr
    cdef double[:, ::1] xi_collapsed = xi_collapsed_arr
    cdef double[::1] mu_onestep = mu_onestep_arr
    cdef double[::1] sigma = sigma_arr
    cdef double[::1] step_ll = step_ll_arr

    cdef double xi_prev[KMAX]
    cdef double prob_prev[KMAX]
    cdef double xi_pair[KMAX][KMAX]
    cdef double mu_pair[KMAX][KMAX]
    cdef double a_pair[KMAX][KMAX]
    cdef double post[KMAX][KMAX]

    cdef Py_ssize_t t, i, j, k, jj
    cdef double sig = sigma0
    cdef double loglik = 0.0
    cdef double dev, y, xi_i, p_i, xi_ij, mu_ij, w, m, s, e, ll, fj, num
    cdef int n_fallback = 0

    for k in range(K):
        xi_prev[k] = xi0[k]
        prob_prev[k] = prob0[k]

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
                    return (NONPOSITIVE_MU, t, -np.inf, step_ll_arr, predicted_arr,
                            filtered_arr, xi_collapsed_arr, mu_onestep_arr,
                            sigma_arr, n_fallback)
                xi_pair[i][j] = xi_ij
                mu_pair[i][j] = mu_ij
                w = p_i * trans[i, j]
                if w > 0.0:
                    a_pair[i][j] = log(w) + _gamma_logpdf(y, mu_ij, theta[j])
                else:
                    a_pair[i][j] = -INFINITY
                predicted[t, j] += w
                mu_onestep[t] += w * mu_ij

        m = -INFINITY
        for i in range(K):
            for j in range(K):
                if a_pair[i][j] > m:
                    m = a_pair[i][j]
        s = 0.0
        for i in range(K):
            for j in range(K):
                e = exp(a_pair[i][j] - m) if a_pair[i][j] > -INFINITY else 0.0
                post[i][j] = e
                s += e
        ll = m + log(s)
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
                num = 0.0
                for i in range(K):
                    for jj in range(K):
                        num += post[i][jj] * xi_pair[i][jj]
                xi_collapsed[t, j] = num
                n_fallback += 1

        for k in range(K):
            xi_prev[k] = xi_collapsed[t, k]
            prob_prev[k] = filtered[t, k]

    return (OK, -1, loglik, step_ll_arr, predicted_arr, filtered_arr,
            xi_collapsed_arr, mu_onestep_arr, sigma_arr, n_fallback)
