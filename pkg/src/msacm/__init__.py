"""Markov-switching asymmetric composite multiplicative error models.

Estimates regime-switching MEMs on realized-volatility series and
classifies policy-announcement dates into volatility-effect groups
(Plank / Squat / Jump) from the smoothed regime probabilities.
"""

from ._backend import backend_name
from .classify import (
    AnnouncementEffect,
    Classification,
    adjusted_rand,
    announcement_deltas,
    classify_all,
    classify_kmeans,
    classify_sp_diff,
    classify_sp_level,
    kmeans_1d,
    phi_series,
    uncertainty_index,
)
from .diagnostics import (
    ResidualReport,
    build_residual_report,
    cross_correlation_lag1,
    ks_mixture_gamma,
    ljung_box,
    residuals,
)
from .engine import (
    ExoSpec,
    FilterOutput,
    SimulatedPath,
    ergodic_distribution,
    exact_path_loglik,
    expected_durations,
    hamilton_kim_filter,
    simulate,
)
from .estimation import (
    FitResult,
    FitSettings,
    ModelSpec,
    ParamTransform,
    fit_qml,
    information_criteria,
    sandwich_se,
)
from .memcore import acm_filter, base_recursion, gamma_log_density
from .params import AcmParams, BaseParams, MsAcmParams, ParameterError, PolicyParams
from .series import (
    AnnouncementCalendar,
    MarketSeries,
    align_announcements,
    demean_proxy,
    forecast_policy_proxy,
    load_announcement_dates,
    load_market_csv,
    write_market_csv,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
