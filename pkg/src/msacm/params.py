"""Model parameter containers and admissibility checks."""

from dataclasses import dataclass, field

import numpy as np


class ParameterError(ValueError):
    """Parameter vector violates an admissibility constraint."""


@dataclass(frozen=True)
class BaseParams:
    """Base volatility recursion coefficients.

    Constraints: omega > 0; alpha, beta, gamma >= 0; alpha + beta + gamma/2 < 1.
    """

    omega: float
    alpha: float
    beta: float
    gamma: float

    def __post_init__(self):
        if not self.omega > 0:
            raise ParameterError(f"omega must be positive, got {self.omega}")
        for name in ("alpha", "beta", "gamma"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be nonnegative")
        if not self.persistence < 1:
            raise ParameterError(
                f"alpha + beta + gamma/2 = {self.persistence} violates stationarity"
            )

    @property
    def persistence(self):
        return self.alpha + self.beta + self.gamma / 2.0


@dataclass(frozen=True)
class PolicyParams:
    """Policy component coefficients.

    ``phi`` holds the K-1 nonnegative regime increments of the switching
    intercept (regimes ordered by level); |psi| < 1.
    """

    delta: float = 0.0
    phi0: float = 0.0
    phi: tuple = ()
    psi: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "phi", tuple(float(v) for v in self.phi))
        if self.phi0 < 0:
            raise ParameterError("phi0 must be nonnegative")
        if any(v < 0 for v in self.phi):
            raise ParameterError("regime increments phi must be nonnegative")
        if not abs(self.psi) < 1:
            raise ParameterError(f"|psi| must be < 1, got {self.psi}")

    def intercepts(self, K):
        """Per-regime intercept: phi0 plus the cumulative increments."""
        if len(self.phi) != K - 1:
            raise ParameterError(f"{len(self.phi)} increments inconsistent with K={K}")
        return np.concatenate([[self.phi0], self.phi0 + np.cumsum(self.phi)])


@dataclass(frozen=True)
class MsAcmParams:
    """Full Markov-switching model parameter vector.

    ``trans`` is the K x K row-stochastic matrix with trans[i, j] =
    Pr(s_t = j | s_{t-1} = i); ``theta`` the per-regime Gamma shapes.
    """

    base: BaseParams
    policy: PolicyParams
    trans: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        trans = np.ascontiguousarray(self.trans, dtype=float)
        theta = np.ascontiguousarray(self.theta, dtype=float)
        K = theta.shape[0]
        if trans.shape != (K, K):
            raise ParameterError(f"trans shape {trans.shape} inconsistent with K={K}")
        if (trans < 0).any() or (trans > 1).any():
            raise ParameterError("transition entries must lie in [0, 1]")
        rowsum = trans.sum(axis=1)
        if np.abs(rowsum - 1.0).max() > 1e-12:
            raise ParameterError(f"transition rows must sum to 1, got {rowsum}")
        if (theta <= 0).any():
            raise ParameterError("Gamma shapes theta must be positive")
        if len(self.policy.phi) != K - 1:
            raise ParameterError(
                f"policy has {len(self.policy.phi)} increments, expected {K - 1}"
            )
        object.__setattr__(self, "trans", trans)
        object.__setattr__(self, "theta", theta)

    @property
    def n_regimes(self):
        return self.theta.shape[0]

    def intercepts(self):
        return self.policy.intercepts(self.n_regimes)


@dataclass(frozen=True)
class AcmParams:
    """Single-regime composite model (also covers the nested AMEM/AMEMX).

    ``phi_ann`` is the optional announcement coefficient on (lam - mean(lam));
    None drops that term.
    """

    base: BaseParams
    theta: float
    delta: float = 0.0
    phi0: float = 0.0
    psi: float = 0.0
    phi_ann: float | None = None

    def __post_init__(self):
        if not self.theta > 0:
            raise ParameterError("theta must be positive")
        if self.phi0 < 0:
            raise ParameterError("phi0 must be nonnegative")
        if not abs(self.psi) < 1:
            raise ParameterError(f"|psi| must be < 1, got {self.psi}")
