"""Announcement classification from smoothed regime probabilities.

Each announcement date gets the pair (p_prev, p_t) of smoothed
high-regime probabilities and their difference, then three labelings:
thresholding the levels at 0.5 (sp_level), thresholding the difference
at +-0.5 (sp_diff), and a globally optimal one-dimensional k-means on
the differences (kmeans).  Groups: Jump = switch into the high regime,
Squat = switch into the low regime, Plank = no regime effect.
"""

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

GROUPS = ("Plank", "Squat", "Jump")
METHODS = ("sp_level", "sp_diff", "kmeans")

# records with p this close to the 0.5 threshold get flagged
TIE_TOL = 1e-9


@dataclass(frozen=True)
class AnnouncementEffect:
    """Per-announcement record: smoothed probabilities, their change, the
    implied switching-intercept values, and the assigned group."""

    date: object
    p_t: float
    p_prev: float
    delta_p: float
    phi_t: float = math.nan
    phi_prev: float = math.nan
    group: str | None = None


@dataclass(frozen=True)
class Classification:
    """One method's labeling of the announcement set.

    ``group_counts`` and ``group_centers`` (mean delta_p per group) use the
    merged three-way groups; ``high_plank`` counts the sp_level Planks that
    sat in the high regime on both days.  ``flags`` collects degeneracy
    notes (ties at the threshold, one-sided k-means centers).
    """

    method: str
    effects: tuple
    group_counts: dict
    group_centers: dict
    U: float
    high_plank: int = 0
    flags: tuple = ()

    def labels(self):
        """Merged three-way label per announcement, in date order."""
        return [merged_group(e.group) for e in self.effects]


def merged_group(group):
    return "Plank" if group in ("LowPlank", "HighPlank") else group


def phi_series(phi0, phi1, smoothed_p1):
    """Time-varying switching intercept phi0 + phi1 * p_t implied by the
    smoothed high-regime probabilities."""
    p = np.asarray(smoothed_p1, dtype=float)
    if ((p < 0) | (p > 1)).any():
        raise ValueError("smoothed probabilities must lie in [0, 1]")
    return phi0 + phi1 * p


def announcement_deltas(smoothed_p1, lam, dates=None, phi0=0.0, phi1=0.0):
    """One record per announcement day (lam = 1), group unset.

    An announcement on the first day has no previous probability and is
    skipped with a warning.  ``phi0``/``phi1`` fill the implied intercept
    fields; they do not affect p or delta_p.
    """
    p = np.asarray(smoothed_p1, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if p.shape != lam.shape:
        raise ValueError("smoothed series and mask must have equal length")
    idx = np.flatnonzero(lam == 1.0)
    if idx.size and idx[0] == 0:
        warnings.warn("announcement on the first day has no previous value; skipped")
        idx = idx[1:]
    effects = []
    for t in idx:
        effects.append(AnnouncementEffect(
            date=dates[t] if dates is not None else int(t),
            p_t=float(p[t]), p_prev=float(p[t - 1]),
            delta_p=float(p[t] - p[t - 1]),
            phi_t=phi0 + phi1 * float(p[t]),
            phi_prev=phi0 + phi1 * float(p[t - 1]),
        ))
    return effects


def _high(p):
    # regime decision at the 0.5 threshold: high iff p > 0.5 (ties go low)
    return p > 0.5


def _tie_flags(effects):
    flags = []
    for e in effects:
        if abs(e.p_t - 0.5) < TIE_TOL or abs(e.p_prev - 0.5) < TIE_TOL:
            flags.append(f"probability within {TIE_TOL:g} of 0.5 at {e.date}")
    return tuple(flags)


def _build(method, effects, flags=()):
    labels = [merged_group(e.group) for e in effects]
    counts = {g: labels.count(g) for g in GROUPS}
    centers = {}
    for g in GROUPS:
        member = [e.delta_p for e, lab in zip(effects, labels) if lab == g]
        centers[g] = float(np.mean(member)) if member else math.nan
    high = sum(1 for e in effects if e.group == "HighPlank")
    return Classification(
        method=method, effects=tuple(effects), group_counts=counts,
        group_centers=centers, U=uncertainty_index_from(effects),
        high_plank=high, flags=tuple(flags),
    )


def classify_sp_level(effects):
    """Threshold the probability levels: low/high Plank when both days sit
    on the same side of 0.5, Squat high->low, Jump low->high."""
    out = []
    for e in effects:
        ht, hp = _high(e.p_t), _high(e.p_prev)
        if ht and hp:
            group = "HighPlank"
        elif not ht and not hp:
            group = "LowPlank"
        elif ht:
            group = "Jump"
        else:
            group = "Squat"
        out.append(replace(e, group=group))
    return _build("sp_level", out, _tie_flags(out))


def classify_sp_diff(effects):
    """Threshold the probability change: Plank when |delta| <= 0.5 (closed
    interval), Squat when delta < -0.5, Jump when delta > 0.5."""
    out = []
    for e in effects:
        if e.delta_p > 0.5:
            group = "Jump"
        elif e.delta_p < -0.5:
            group = "Squat"
        else:
            group = "Plank"
        out.append(replace(e, group=group))
    return _build("sp_diff", out)


def classify_kmeans(effects, k=3):
    """Globally optimal 1-d k-means on the delta_p values."""
    deltas = [e.delta_p for e in effects]
    return kmeans_1d(deltas, k=k, effects=effects)


def kmeans_1d(deltas, k=3, effects=None):
    """Exact 1-d k-means by dynamic programming over the sorted values.

    Optimal univariate clusters are contiguous in sort order, so the DP
    minimizes the within-cluster sum of squares globally; no dependence on
    initialization.  Clusters are labeled by center order: most negative
    Squat, middle Plank, most positive Jump (k = 3).  When the centers do
    not straddle zero the labels still follow center order and the result
    carries a flag.
    """
    values = np.asarray(deltas, dtype=float)
    n = values.shape[0]
    if n == 0:
        raise ValueError("no values to cluster")
    if np.unique(values).size < k:
        raise ValueError(f"k-means needs at least {k} distinct values")

    order = np.argsort(values, kind="stable")
    x = values[order]
    assign_sorted, centers = _kmeans_dp(x, k)

    labels_by_cluster = _cluster_labels(centers)
    flags = []
    if k == 3 and (centers[0] >= 0 or centers[-1] <= 0):
        flags.append(f"k-means centers do not straddle zero: {centers.tolist()}")

    group_sorted = [labels_by_cluster[c] for c in assign_sorted]
    groups = [None] * n
    for pos, orig in enumerate(order):
        groups[orig] = group_sorted[pos]

    if effects is None:
        effects = [AnnouncementEffect(date=i, p_t=math.nan, p_prev=math.nan,
                                      delta_p=float(v)) for i, v in enumerate(values)]
    out = [replace(e, group=g) for e, g in zip(effects, groups)]
    return _build("kmeans", out, flags)


def _kmeans_dp(x, k):
    """DP over sorted x; returns (cluster index per point, cluster centers)."""
    n = x.shape[0]
    s1 = np.concatenate([[0.0], np.cumsum(x)])
    s2 = np.concatenate([[0.0], np.cumsum(x * x)])

    def cost(a, b):
        # within-segment sum of squares for x[a..b] inclusive
        m = b - a + 1
        seg1 = s1[b + 1] - s1[a]
        seg2 = s2[b + 1] - s2[a]
        return seg2 - seg1 * seg1 / m

    INF = math.inf
    D = np.full((k + 1, n), INF)
    cut = np.zeros((k + 1, n), dtype=int)
    for i in range(n):
        D[1, i] = cost(0, i)
    for m in range(2, k + 1):
        for i in range(m - 1, n):
            for j in range(m - 1, i + 1):
                c = D[m - 1, j - 1] + cost(j, i)
                if c < D[m, i]:
                    D[m, i] = c
                    cut[m, i] = j
    assign = np.empty(n, dtype=int)
    hi = n - 1
    for m in range(k, 0, -1):
        lo = cut[m, hi] if m > 1 else 0
        assign[lo:hi + 1] = m - 1
        hi = lo - 1
    centers = np.array([x[assign == c].mean() for c in range(k)])
    return assign, centers


def _cluster_labels(centers):
    k = centers.shape[0]
    if k == 3:
        return {0: "Squat", 1: "Plank", 2: "Jump"}
    if k == 1:
        return {0: "Plank"}
    return {c: f"G{c}" for c in range(k)}


def uncertainty_index(classification):
    """Classification sharpness in [0, 1]; 0 when every announcement sits at
    its group's ideal probability change (0 Plank, -1 Squat, +1 Jump)."""
    return uncertainty_index_from(classification.effects)


def uncertainty_index_from(effects):
    if not effects:
        raise ValueError("uncertainty index undefined for an empty set")
    total = 0.0
    for e in effects:
        g = merged_group(e.group)
        if g == "Plank":
            total += abs(e.delta_p)
        elif g == "Squat":
            total += abs(e.delta_p + 1.0)
        elif g == "Jump":
            total += abs(e.delta_p - 1.0)
        else:
            raise ValueError(f"effect at {e.date} has no group label")
    return 2.0 * total / len(effects)


def adjusted_rand(labels_a, labels_b):
    """Hubert-Arabie adjusted Rand index between two labelings."""
    if len(labels_a) != len(labels_b):
        raise ValueError("label sequences must have equal length")
    n = len(labels_a)
    if n < 2:
        raise ValueError("need at least 2 items")
    cats_a = {lab: i for i, lab in enumerate(dict.fromkeys(labels_a))}
    cats_b = {lab: i for i, lab in enumerate(dict.fromkeys(labels_b))}
    table = np.zeros((len(cats_a), len(cats_b)), dtype=np.int64)
    for a, b in zip(labels_a, labels_b):
        table[cats_a[a], cats_b[b]] += 1

    def comb2(v):
        return v * (v - 1) // 2

    sum_ij = int(sum(comb2(v) for v in table.ravel()))
    sum_a = int(sum(comb2(v) for v in table.sum(axis=1)))
    sum_b = int(sum(comb2(v) for v in table.sum(axis=0)))
    pairs = comb2(n)
    expected = sum_a * sum_b / pairs
    maximum = 0.5 * (sum_a + sum_b)
    if maximum == expected:
        # both partitions put everything in one group: identical by convention
        return 1.0
    return (sum_ij - expected) / (maximum - expected)


def classify_all(effects, k=3):
    """All three methods on the same effects; returns {method: Classification}."""
    return {
        "sp_level": classify_sp_level(effects),
        "sp_diff": classify_sp_diff(effects),
        "kmeans": classify_kmeans(effects, k=k),
    }


def ari_matrix(classifications):
    """Pairwise adjusted Rand indices between methods, as a nested dict."""
    methods = list(classifications)
    out = {}
    for a in methods:
        out[a] = {}
        for b in methods:
            out[a][b] = adjusted_rand(classifications[a].labels(),
                                      classifications[b].labels())
    return out
