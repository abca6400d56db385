"""Quasi-maximum-likelihood estimation.

Fits any of the nested variants (amem, amemx, acm, msacm) by maximizing
the Gamma quasi-likelihood over an unconstrained reparameterization:
Nelder-Mead from several random admissible starts, then a BFGS polish of
the best start using central-difference gradients.  Robust sandwich
standard errors come from the finite-difference Hessian and the outer
product of per-observation scores, mapped back to the natural scale
through the transform Jacobian.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import engine, memcore
from .params import AcmParams, BaseParams, MsAcmParams, ParameterError, PolicyParams

VARIANTS = ("amem", "amemx", "acm", "msacm")

# objective value standing in for an infeasible parameter point
BIG = 1e12

_EPS = np.finfo(float).eps
_H_GRAD = math.sqrt(_EPS)
_H_HESS = _EPS ** (1.0 / 3.0)


class TransformError(ValueError):
    """Parameter point on or outside the admissible boundary."""


class EstimationError(RuntimeError):
    """No start produced a finite likelihood, or inputs are unusable."""


@dataclass(frozen=True)
class ModelSpec:
    """Which variant to fit and which optional terms are free.

    For msacm, phi0 and psi default to off (fixed at 0); for acm, psi is
    part of the model and phi0 stays off unless enabled.  ``announce``
    adds the announcement-dummy coefficient to the acm variant.  ``fixed``
    pins named parameters at given values, removing them from the free set.
    """

    variant: str = "msacm"
    k_regimes: int = 2
    enable_phi0: bool = False
    enable_psi: bool = False
    announce: bool = False
    fixed: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.variant == "msacm" and self.k_regimes < 2:
            raise ValueError("msacm needs at least 2 regimes")
        if self.announce and self.variant != "acm":
            raise ValueError("the announcement term exists only in the acm variant")

    def param_names(self):
        names = ["omega", "alpha", "beta", "gamma"]
        if self.variant != "amem":
            names.append("delta")
        if self.variant == "acm" or (self.variant == "msacm" and self.enable_psi):
            names.append("psi")
        if self.enable_phi0:
            names.append("phi0")
        if self.announce:
            names.append("phi_ann")
        if self.variant == "msacm":
            K = self.k_regimes
            names += [f"phi_{j}" for j in range(1, K)]
            if K == 2:
                names += ["p00", "p11"]
            else:
                names += [f"p{i}{j}" for i in range(K) for j in range(K) if j != i]
            names += [f"theta_{j}" for j in range(K)]
        else:
            names.append("theta")
        return [n for n in names if n not in self.fixed]


class ParamTransform:
    """Bijection between admissible parameters and an unconstrained vector.

    omega, theta, phi increments and phi0 map through log; psi through
    atanh; delta (and phi_ann) are unconstrained; (alpha, beta, gamma) use
    a simplex-style map keeping alpha + beta + gamma/2 < 1 with all three
    nonnegative; each transition row maps through log-ratios against its
    diagonal entry.
    """

    def __init__(self, spec):
        self.spec = spec
        self.names = spec.param_names()
        self.n = len(self.names)

    # --- natural vector <-> params object ---------------------------------

    def natural(self, params):
        spec = self.spec
        vals = {}
        vals["omega"] = params.base.omega
        vals["alpha"] = params.base.alpha
        vals["beta"] = params.base.beta
        vals["gamma"] = params.base.gamma
        if isinstance(params, MsAcmParams):
            vals["delta"] = params.policy.delta
            vals["psi"] = params.policy.psi
            vals["phi0"] = params.policy.phi0
            for j, inc in enumerate(params.policy.phi, start=1):
                vals[f"phi_{j}"] = inc
            K = spec.k_regimes
            if K == 2:
                vals["p00"] = params.trans[0, 0]
                vals["p11"] = params.trans[1, 1]
            else:
                for i in range(K):
                    for j in range(K):
                        if j != i:
                            vals[f"p{i}{j}"] = params.trans[i, j]
            for j in range(K):
                vals[f"theta_{j}"] = params.theta[j]
        else:
            vals["delta"] = params.delta
            vals["psi"] = params.psi
            vals["phi0"] = params.phi0
            if params.phi_ann is not None:
                vals["phi_ann"] = params.phi_ann
            vals["theta"] = params.theta
        return np.array([vals[name] for name in self.names])

    def params_from_natural(self, vec):
        spec = self.spec
        vals = dict(zip(self.names, vec))
        vals.update(spec.fixed)

        def get(name, default=0.0):
            return float(vals.get(name, default))

        base = BaseParams(get("omega"), get("alpha"), get("beta"), get("gamma"))
        if spec.variant == "msacm":
            K = spec.k_regimes
            policy = PolicyParams(
                delta=get("delta"), phi0=get("phi0"),
                phi=tuple(get(f"phi_{j}") for j in range(1, K)),
                psi=get("psi"),
            )
            trans = np.empty((K, K))
            if K == 2:
                p00, p11 = get("p00"), get("p11")
                trans[0] = (p00, 1.0 - p00)
                trans[1] = (1.0 - p11, p11)
            else:
                for i in range(K):
                    off = [get(f"p{i}{j}") for j in range(K) if j != i]
                    row = []
                    it = iter(off)
                    for j in range(K):
                        row.append(1.0 - sum(off) if j == i else next(it))
                    trans[i] = row
            theta = np.array([get(f"theta_{j}") for j in range(K)])
            return MsAcmParams(base=base, policy=policy, trans=trans, theta=theta)
        return AcmParams(
            base=base, theta=get("theta"), delta=get("delta"),
            phi0=get("phi0"), psi=get("psi"),
            phi_ann=get("phi_ann") if spec.announce else None,
        )

    # --- unconstrained <-> natural -----------------------------------------

    @staticmethod
    def _kind(name):
        if name == "psi":
            return "atanh"
        if name in ("delta", "phi_ann"):
            return "id"
        if name in ("omega", "phi0") or name.startswith(("theta", "phi_")):
            return "log"
        if name[0] == "p" and name[1:].isdigit():
            return "trans"
        raise AssertionError(name)

    def to_unconstrained(self, params):
        vec = self.natural(params)
        z = np.empty(self.n)
        i = 0
        while i < self.n:
            name = self.names[i]
            if name == "alpha":
                # joint simplex map for (alpha, beta, gamma)
                a, b, g = vec[i], vec[i + 1], vec[i + 2]
                s = 1.0 - (a + b + g / 2.0)
                if s <= 0 or a < 0 or b < 0 or g < 0:
                    raise TransformError(
                        "alpha + beta + gamma/2 must be < 1 with nonnegative parts"
                    )
                with np.errstate(divide="ignore", invalid="ignore"):
                    z[i] = np.log(a / s)
                    z[i + 1] = np.log(b / s)
                    z[i + 2] = np.log((g / 2.0) / s)
                i += 3
                continue
            kind = self._kind(name)
            if kind == "log":
                z[i] = _safe_log(vec[i], name)
            elif kind == "atanh":
                if not abs(vec[i]) < 1:
                    raise TransformError("|psi| must be < 1")
                z[i] = math.atanh(vec[i])
            elif kind == "id":
                z[i] = vec[i]
            else:
                z[i] = self._trans_row_to_z(params.trans, name)
            i += 1
        if not np.isfinite(z).all():
            raise TransformError("parameters on the admissible boundary")
        return z

    def _trans_row_to_z(self, trans, name):
        i, j = int(name[1]), int(name[2])
        if name in ("p00", "p11") and self.spec.k_regimes == 2:
            pii = trans[i, i]
            if not 0 < pii < 1:
                raise TransformError(f"{name} must lie in (0, 1)")
            return math.log((1.0 - pii) / pii)
        pij, pii = trans[i, j], trans[i, i]
        if pij <= 0 or pii <= 0:
            raise TransformError(f"transition entries in row {i} must be positive")
        return math.log(pij / pii)

    def from_unconstrained(self, z):
        z = np.asarray(z, dtype=float)
        if z.shape != (self.n,):
            raise ValueError(f"expected vector of length {self.n}")
        vec = np.empty(self.n)
        rows = {}
        i = 0
        while i < self.n:
            name = self.names[i]
            if name == "alpha":
                e = np.exp(z[i:i + 3])
                denom = 1.0 + e.sum()
                u = e / denom
                vec[i], vec[i + 1], vec[i + 2] = u[0], u[1], 2.0 * u[2]
                i += 3
                continue
            kind = self._kind(name)
            if kind == "log":
                vec[i] = math.exp(z[i]) if z[i] < 700 else math.inf
            elif kind == "atanh":
                vec[i] = math.tanh(z[i])
            elif kind == "id":
                vec[i] = z[i]
            else:
                rows.setdefault(int(name[1]), []).append((name, i))
            i += 1
        for row, items in rows.items():
            evals = np.exp([z[idx] for _, idx in items])
            denom = 1.0 + evals.sum()
            if self.spec.k_regimes == 2:
                # single free coordinate per row, reported as the diagonal
                name, idx = items[0]
                vec[idx] = 1.0 / denom
            else:
                for (name, idx), e in zip(items, evals):
                    vec[idx] = e / denom
        if not np.isfinite(vec).all():
            raise TransformError("unconstrained vector maps outside the admissible region")
        return self.params_from_natural(vec)

    def natural_from_z(self, z):
        return self.natural(self.from_unconstrained(z))


def _safe_log(v, name):
    if v <= 0:
        raise TransformError(f"{name} must be positive, got {v}")
    return math.log(v)


# --- likelihood dispatch ----------------------------------------------------


def loglik_terms(spec, params, series):
    """(total loglik, per-observation contributions) for any variant."""
    if isinstance(params, MsAcmParams):
        fo = engine.hamilton_kim_filter(params, series, smooth=False)
        return fo.loglik, fo.step_loglik
    _, _, ll, terms, _ = memcore.acm_filter_terms(params, series)
    return ll, terms


@dataclass(frozen=True)
class FitSettings:
    """Optimizer configuration.  ``n_starts`` random admissible starts are
    drawn from the box recorded in the fit report; seed fixes the draw.
    Each start runs a capped Nelder-Mead to localize a basin, then a BFGS
    polish on central-difference gradients."""

    n_starts: int = 11
    seed: int = 0
    nm_maxiter: int = 600
    nm_xatol: float = 1e-4
    nm_fatol: float = 1e-6
    polish: bool = True
    polish_gtol: float = 1e-5
    polish_maxiter: int = 200
    compute_se: bool = True


@dataclass(frozen=True)
class FitResult:
    """Estimates with robust standard errors and fit metadata."""

    spec: ModelSpec
    params: object
    names: list
    estimates: np.ndarray
    se: np.ndarray
    loglik: float
    aic: float
    bic: float
    converged: bool
    n_starts: int
    best_start: int
    iterations: int
    n_obs: int
    k_params: int
    per_start: list
    start_box: dict
    seed: int
    se_flag: str = ""

    def summary(self):
        """Human-readable estimate table, standard errors in parentheses."""
        lines = [f"{self.spec.variant} fit: loglik={self.loglik:.4f} "
                 f"aic={self.aic:.2f} bic={self.bic:.2f} "
                 f"(T={self.n_obs}, k={self.k_params}, "
                 f"converged={self.converged}, starts={self.n_starts})"]
        for name, est, se in zip(self.names, self.estimates, self.se):
            se_txt = f"({se:.4g})" if np.isfinite(se) else "(n/a)"
            lines.append(f"  {name:<8s} {est: .4f}  {se_txt}")
        if self.se_flag:
            lines.append(f"  note: {self.se_flag}")
        return "\n".join(lines)


def information_criteria(loglik, k_params, n_obs):
    """(aic, bic) = (-2 ll + 2 k, -2 ll + k log T)."""
    if n_obs <= 0:
        raise ValueError("n_obs must be positive")
    aic = -2.0 * loglik + 2.0 * k_params
    bic = -2.0 * loglik + k_params * math.log(n_obs)
    return aic, bic


def _start_box(spec, series):
    rv = series.rv
    sd = float(np.std(rv))
    mean = float(np.mean(rv))
    K = spec.k_regimes
    box = {
        "alpha": (0.03, 0.25),
        "beta": (0.40, 0.90),
        "gamma": (0.02, 0.20),
        "omega_scale": (0.5, 1.5),  # times mean(rv) * (1 - persistence)
        "delta": (-2.0, 2.0),
        "psi": (-0.4, 0.4),
        "phi0": (0.05, 0.5),
        "phi_inc": (0.2 * sd / (K - 1) if K > 1 else 0.0,
                    1.2 * sd / (K - 1) if K > 1 else 0.0),
        "p_diag_low": (0.85, 0.99),
        "p_diag_high": (0.15, 0.90),
        "theta": (2.0, 14.0),
        "phi_ann": (-2.0, 2.0),
        "rv_mean": mean,
        "rv_sd": sd,
    }
    return box


def _draw_start(rng, spec, box):
    """One random admissible natural vector from the start box."""
    u = lambda lo, hi: float(rng.uniform(lo, hi))
    vals = {}
    a = u(*box["alpha"])
    b = u(*box["beta"])
    g = u(*box["gamma"])
    pers = a + b + g / 2.0
    if pers > 0.97:
        shrink = 0.95 * 0.97 / pers
        a, b, g = a * shrink, b * shrink, g * shrink
        pers = a + b + g / 2.0
    vals.update(alpha=a, beta=b, gamma=g)
    vals["omega"] = box["rv_mean"] * (1.0 - pers) * u(*box["omega_scale"])
    vals["delta"] = u(*box["delta"])
    vals["psi"] = u(*box["psi"])
    vals["phi0"] = u(*box["phi0"])
    vals["phi_ann"] = u(*box["phi_ann"])
    K = spec.k_regimes
    for j in range(1, K):
        vals[f"phi_{j}"] = u(*box["phi_inc"])
    if spec.variant == "msacm":
        diags = [u(*box["p_diag_low"])] + [u(*box["p_diag_high"]) for _ in range(K - 1)]
        if K == 2:
            vals["p00"], vals["p11"] = diags
        else:
            for i in range(K):
                off = (1.0 - diags[i]) / (K - 1)
                for j in range(K):
                    if j != i:
                        vals[f"p{i}{j}"] = off
        for j in range(K):
            vals[f"theta_{j}"] = u(*box["theta"])
    else:
        vals["theta"] = u(*box["theta"])
    return vals


def _objective(transform, spec, series):
    def negloglik(z):
        try:
            params = transform.from_unconstrained(z)
        except (ParameterError, TransformError, OverflowError):
            return BIG
        try:
            ll, _ = loglik_terms(spec, params, series)
        except np.linalg.LinAlgError:
            return BIG
        if not np.isfinite(ll):
            return BIG
        return -ll

    return negloglik


def _central_grad(fun, z, h_scale=_H_GRAD):
    n = z.shape[0]
    grad = np.empty(n)
    for i in range(n):
        h = h_scale * max(1.0, abs(z[i]))
        zp, zm = z.copy(), z.copy()
        zp[i] += h
        zm[i] -= h
        grad[i] = (fun(zp) - fun(zm)) / (2.0 * h)
    return grad


def _grad_small(fun, z, tol):
    """Direct gradient check; BFGS can report line-search precision loss
    while already sitting at a well-converged optimum."""
    return float(np.max(np.abs(_central_grad(fun, z)))) < tol


def fit_qml(spec, series, settings=None):
    """Maximize the quasi-likelihood of ``spec`` on ``series``.

    Runs Nelder-Mead from each admissible random start, polishes the best
    start with BFGS on central-difference gradients, and returns the best
    result (ties broken by lowest start index).  Deterministic given the
    settings seed.
    """
    settings = settings or FitSettings()
    if isinstance(spec, str):
        spec = ModelSpec(variant=spec)
    transform = ParamTransform(spec)
    if "delta" in transform.names and (series.x_hat is None or series.x_bar is None):
        raise EstimationError(
            f"variant {spec.variant!r} needs the demeaned proxy forecast; "
            "run forecast_policy_proxy and demean_proxy first"
        )
    negloglik = _objective(transform, spec, series)
    rng = np.random.default_rng(settings.seed)
    box = _start_box(spec, series)

    starts = []
    for _ in range(settings.n_starts):
        z0 = None
        for _ in range(100):
            vals = _draw_start(rng, spec, box)
            cand = transform.params_from_natural(
                np.array([vals[n] for n in transform.names]))
            z = transform.to_unconstrained(cand)
            if negloglik(z) < BIG:
                z0 = z
                break
        if z0 is None:
            raise EstimationError("could not draw an admissible start in 100 tries")
        starts.append(z0)

    nm_opts = {
        "xatol": settings.nm_xatol,
        "fatol": settings.nm_fatol,
        "maxiter": settings.nm_maxiter,
        "adaptive": True,
    }

    per_start = []
    best = None
    for idx, z0 in enumerate(starts):
        res = minimize(negloglik, z0, method="Nelder-Mead", options=nm_opts)
        z_s, fun_s = res.x, res.fun
        iters = int(res.nit)
        conv = bool(res.success)
        if settings.polish and fun_s < BIG / 2:
            pol = minimize(
                negloglik, z_s, method="BFGS",
                jac=lambda z: _central_grad(negloglik, z),
                options={"gtol": settings.polish_gtol,
                         "maxiter": settings.polish_maxiter},
            )
            iters += int(pol.nit)
            # keep the simplex point if the polish somehow went uphill
            if pol.fun <= fun_s:
                z_s, fun_s = pol.x, pol.fun
                conv = conv or bool(pol.success) or _grad_small(
                    negloglik, pol.x, 1e-3)
        per_start.append({
            "start": idx,
            "loglik_start": -negloglik(z0),
            "loglik": -fun_s,
            "iterations": iters,
            "converged": conv,
        })
        if best is None or fun_s < best[1]:
            best = (idx, fun_s, z_s, iters, conv)

    best_idx, best_fun, z_hat, iterations, converged = best
    if best_fun >= BIG / 2:
        raise EstimationError(
            "all starts failed to produce a finite likelihood; per-start log: "
            f"{per_start}"
        )
    loglik = -best_fun

    params = transform.from_unconstrained(z_hat)
    estimates = transform.natural(params)
    k_params = transform.n
    T = len(series)
    aic, bic = information_criteria(loglik, k_params, T)

    se = np.full(k_params, np.nan)
    se_flag = ""
    if settings.compute_se:
        se, se_flag = sandwich_se(spec, params, series, transform=transform)

    return FitResult(
        spec=spec, params=params, names=list(transform.names),
        estimates=estimates, se=se, loglik=loglik, aic=aic, bic=bic,
        converged=converged, n_starts=settings.n_starts, best_start=best_idx,
        iterations=iterations, n_obs=T, k_params=k_params,
        per_start=per_start, start_box=box, seed=settings.seed, se_flag=se_flag,
    )


def sandwich_se(spec, params, series, transform=None):
    """Robust H^-1 G H^-1 standard errors at a fitted optimum.

    H is the central finite-difference Hessian of the total log-likelihood
    in the unconstrained space, G the outer-product sum of per-observation
    finite-difference scores; the covariance is mapped to the natural scale
    through the transform Jacobian.  Returns (se, flag); flag is non-empty
    when a pseudo-inverse had to stand in for the Hessian inverse.
    """
    if isinstance(spec, str):
        spec = ModelSpec(variant=spec)
    transform = transform or ParamTransform(spec)
    z = transform.to_unconstrained(params)
    n = z.shape[0]

    def total(zv):
        try:
            return loglik_terms(spec, transform.from_unconstrained(zv), series)[0]
        except (ParameterError, TransformError, np.linalg.LinAlgError):
            return -np.inf

    def terms(zv):
        return loglik_terms(spec, transform.from_unconstrained(zv), series)[1]

    # Hessian: central differences, step ~ cbrt(eps) * scale
    h = np.array([_H_HESS * max(1.0, abs(zi)) for zi in z])
    H = np.empty((n, n))
    f0 = total(z)
    for i in range(n):
        for j in range(i, n):
            if i == j:
                zp, zm = z.copy(), z.copy()
                zp[i] += h[i]
                zm[i] -= h[i]
                H[i, i] = (total(zp) - 2.0 * f0 + total(zm)) / (h[i] ** 2)
            else:
                zpp, zpm, zmp, zmm = z.copy(), z.copy(), z.copy(), z.copy()
                zpp[[i, j]] += (h[i], h[j])
                zpm[i] += h[i]
                zpm[j] -= h[j]
                zmp[i] -= h[i]
                zmp[j] += h[j]
                zmm[[i, j]] -= (h[i], h[j])
                H[i, j] = H[j, i] = (
                    total(zpp) - total(zpm) - total(zmp) + total(zmm)
                ) / (4.0 * h[i] * h[j])

    # per-observation scores: central differences, step ~ sqrt(eps) * scale
    hs = np.array([_H_GRAD * max(1.0, abs(zi)) for zi in z])
    S = np.empty((len(series), n))
    for i in range(n):
        zp, zm = z.copy(), z.copy()
        zp[i] += hs[i]
        zm[i] -= hs[i]
        S[:, i] = (terms(zp) - terms(zm)) / (2.0 * hs[i])
    G = S.T @ S

    flag = ""
    try:
        Hinv = np.linalg.solve(H, np.eye(n))
    except np.linalg.LinAlgError:
        Hinv = np.linalg.pinv(H)
        flag = "singular Hessian: pseudo-inverse used"
    cov_z = Hinv @ G @ Hinv

    # Jacobian of the natural parameters w.r.t. z
    J = np.empty((n, n))
    for i in range(n):
        zp, zm = z.copy(), z.copy()
        zp[i] += hs[i]
        zm[i] -= hs[i]
        J[:, i] = (transform.natural_from_z(zp) - transform.natural_from_z(zm)) / (2.0 * hs[i])
    cov_nat = J @ cov_z @ J.T
    se = np.sqrt(np.clip(np.diag(cov_nat), 0.0, None))
    return se, flag
