import datetime as dt

import numpy as np
import pytest

from msacm.params import BaseParams, MsAcmParams, PolicyParams


def cac40_params(psi=0.0, phi0=0.0):
    """Published CAC40-style parameter point used across recovery tests."""
    return MsAcmParams(
        base=BaseParams(omega=0.853, alpha=0.142, beta=0.732, gamma=0.112),
        policy=PolicyParams(delta=-0.776, phi0=phi0, phi=(6.273,), psi=psi),
        trans=np.array([[0.964, 0.036], [0.778, 0.222]]),
        theta=np.array([8.852, 3.271]),
    )


@pytest.fixture
def cac40():
    return cac40_params()


def make_series(rv, d=None, x=None, x_hat=None, x_bar=None, lam=None,
                start=dt.date(2015, 1, 1)):
    from msacm.series import MarketSeries

    rv = np.asarray(rv, dtype=float)
    T = rv.shape[0]
    dates = tuple(start + dt.timedelta(days=i) for i in range(T))
    return MarketSeries(
        dates=dates, rv=rv,
        d=np.zeros(T) if d is None else np.asarray(d, dtype=float),
        x=x if x is None else np.asarray(x, dtype=float),
        x_hat=x_hat if x_hat is None else np.asarray(x_hat, dtype=float),
        x_bar=x_bar,
        lam=lam if lam is None else np.asarray(lam, dtype=float),
    )


def random_admissible_params(rng, K=2, psi=0.0, rv_scale=10.0):
    """Random parameter point with regimes separated enough to keep mu > 0."""
    a = rng.uniform(0.05, 0.2)
    b = rng.uniform(0.4, 0.8)
    g = rng.uniform(0.02, 0.15)
    if a + b + g / 2 > 0.95:
        a, b, g = 0.1, 0.7, 0.1
    base = BaseParams(omega=rv_scale * (1 - a - b - g / 2) * rng.uniform(0.6, 1.2),
                      alpha=a, beta=b, gamma=g)
    policy = PolicyParams(
        delta=rng.uniform(-0.5, 0.5), phi0=0.0,
        phi=tuple(rng.uniform(0.2, 0.8) * rv_scale for _ in range(K - 1)),
        psi=psi,
    )
    trans = np.empty((K, K))
    for i in range(K):
        diag = rng.uniform(0.6, 0.95)
        trans[i] = (1 - diag) / (K - 1)
        trans[i, i] = diag
    theta = rng.uniform(2.0, 12.0, size=K)
    return MsAcmParams(base=base, policy=policy, trans=trans, theta=theta)
