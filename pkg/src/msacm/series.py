"""Market data ingestion and alignment.

A :class:`MarketSeries` bundles the aligned daily inputs every model
consumes: realized volatility, the asymmetry dummy, the policy proxy with
its one-step forecast, and the announcement mask.  CSV is the only
ingestion format; all numerics are parsed as 64-bit floats.

Input CSV contract: header row with columns ``date,rv[,ret][,d][,x][,x_hat][,lam]``,
comma separated, ``.`` decimal point, UTF-8.  Leading ``#`` lines are
skipped (our own writers put run metadata there).  The announcement file
holds one ISO-8601 date per line; ``#`` comments allowed.
"""

import csv
import datetime as dt
import warnings
from dataclasses import dataclass, replace

import numpy as np


class SchemaError(ValueError):
    """A required CSV column is missing."""


class ValidationError(ValueError):
    """A row violates a data invariant (non-positive rv, bad dummy, ...)."""


class ParseError(ValueError):
    """A cell could not be parsed; message carries the row index."""


@dataclass(frozen=True)
class MarketSeries:
    """Aligned daily series; parallel arrays of equal length T >= 2.

    Attributes
    ----------
    dates : tuple of datetime.date, strictly increasing
    rv : ndarray, annualized realized volatility, positive
    d : ndarray, asymmetry dummy in {0,1} (1 when the same-day return is negative)
    x : ndarray or None, policy proxy level
    x_hat : ndarray or None, one-step conditional expectation of x
    x_bar : float or None, long-term mean of x (set by demean_proxy)
    lam : ndarray, announcement mask in {0,1}
    """

    dates: tuple
    rv: np.ndarray
    d: np.ndarray
    x: np.ndarray | None = None
    x_hat: np.ndarray | None = None
    x_bar: float | None = None
    lam: np.ndarray | None = None

    def __post_init__(self):
        T = len(self.dates)
        if T < 2:
            raise ValidationError(f"series needs at least 2 rows, got {T}")
        if self.lam is None:
            object.__setattr__(self, "lam", np.zeros(T))
        for name in ("rv", "d", "x", "x_hat", "lam"):
            arr = getattr(self, name)
            if arr is None:
                continue
            arr = np.ascontiguousarray(arr, dtype=float)
            if arr.shape != (T,):
                raise ValidationError(f"column {name} has length {arr.shape}, expected {T}")
            object.__setattr__(self, name, arr)
        for t in range(1, T):
            if not self.dates[t] > self.dates[t - 1]:
                raise ValidationError(f"dates not strictly increasing at row {t}")
        bad = np.flatnonzero(self.rv <= 0)
        if bad.size:
            raise ValidationError(f"non-positive rv at row {bad[0]}")
        if not np.isin(self.d, (0.0, 1.0)).all():
            raise ValidationError("asymmetry dummy d must be 0 or 1")
        if not np.isin(self.lam, (0.0, 1.0)).all():
            raise ValidationError("announcement mask lam must be 0 or 1")

    def __len__(self):
        return len(self.dates)

    def xdev(self):
        """Demeaned proxy forecast x_hat - x_bar consumed by the models."""
        if self.x_hat is None or self.x_bar is None:
            raise ValidationError("series has no demeaned proxy forecast; "
                                  "run forecast_policy_proxy and demean_proxy first")
        return self.x_hat - self.x_bar


@dataclass(frozen=True)
class AnnouncementCalendar:
    """Set of announcement dates."""

    dates: frozenset

    def __len__(self):
        return len(self.dates)


def _parse_date(text, row):
    try:
        return dt.date.fromisoformat(text.strip())
    except ValueError as exc:
        raise ParseError(f"row {row}: unparseable date {text!r}") from exc


def _parse_float(text, row, col):
    try:
        return float(text)
    except ValueError as exc:
        raise ParseError(f"row {row}: unparseable {col} value {text!r}") from exc


def load_market_csv(path, schema=None):
    """Read and validate a market CSV into a MarketSeries.

    ``schema`` optionally maps canonical column names (date, rv, ret, d, x,
    x_hat, lam) to the names used in the file.  Rows are sorted by date;
    duplicate dates are rejected.  When a ``ret`` column is supplied and
    ``d`` is not, d[t] = 1 iff ret[t] < 0.
    """
    schema = schema or {}
    colname = {k: schema.get(k, k) for k in ("date", "rv", "ret", "d", "x", "x_hat", "lam")}

    with open(path, newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    if reader.fieldnames is None:
        raise SchemaError("empty file: no header row")
    fields = set(reader.fieldnames)
    for req in ("date", "rv"):
        if colname[req] not in fields:
            raise SchemaError(f"missing required column {colname[req]!r}")
    has = {k: colname[k] in fields for k in ("ret", "d", "x", "x_hat", "lam")}
    if not (has["ret"] or has["d"]):
        raise SchemaError(f"need column {colname['ret']!r} or {colname['d']!r}")

    rows = []
    for idx, rec in enumerate(reader):
        date = _parse_date(rec[colname["date"]], idx)
        rv = _parse_float(rec[colname["rv"]], idx, "rv")
        if rv <= 0:
            raise ValidationError(f"row {idx}: rv must be positive, got {rv}")
        if has["d"]:
            dval = _parse_float(rec[colname["d"]], idx, "d")
        else:
            dval = 1.0 if _parse_float(rec[colname["ret"]], idx, "ret") < 0 else 0.0
        row = {"date": date, "rv": rv, "d": dval}
        for opt in ("x", "x_hat", "lam"):
            if has[opt]:
                row[opt] = _parse_float(rec[colname[opt]], idx, opt)
        rows.append(row)

    rows.sort(key=lambda r: r["date"])
    for a, b in zip(rows, rows[1:]):
        if a["date"] == b["date"]:
            raise ValidationError(f"duplicate date {a['date'].isoformat()}")

    def col(name):
        if rows and name in rows[0]:
            return np.array([r[name] for r in rows])
        return None

    return MarketSeries(
        dates=tuple(r["date"] for r in rows),
        rv=np.array([r["rv"] for r in rows]),
        d=np.array([r["d"] for r in rows]),
        x=col("x"),
        x_hat=col("x_hat"),
        lam=col("lam"),
    )


def write_market_csv(series, path, header_lines=()):
    """Write a MarketSeries; floats use repr so a reload is bit-exact."""
    cols = ["date", "rv", "d"]
    if series.x is not None:
        cols.append("x")
    if series.x_hat is not None:
        cols.append("x_hat")
    cols.append("lam")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(cols)
        for t in range(len(series)):
            row = [series.dates[t].isoformat(), repr(float(series.rv[t])), int(series.d[t])]
            if series.x is not None:
                row.append(repr(float(series.x[t])))
            if series.x_hat is not None:
                row.append(repr(float(series.x_hat[t])))
            row.append(int(series.lam[t]))
            writer.writerow(row)


def load_announcement_dates(path):
    """Read an announcement calendar: one ISO date per line, # comments."""
    dates = set()
    with open(path, encoding="utf-8") as fh:
        for idx, line in enumerate(fh):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            dates.add(_parse_date(text, idx))
    return AnnouncementCalendar(dates=frozenset(dates))


def align_announcements(series, cal):
    """Set lam=1 exactly on series dates present in the calendar.

    Calendar dates absent from the series (holidays, weekends) are dropped
    with a warning, never an error.
    """
    index = {date: t for t, date in enumerate(series.dates)}
    lam = np.zeros(len(series))
    missing = []
    for date in sorted(cal.dates):
        t = index.get(date)
        if t is None:
            missing.append(date)
        else:
            lam[t] = 1.0
    if missing:
        warnings.warn(
            "announcement dates not in series (skipped): "
            + ", ".join(d.isoformat() for d in missing)
        )
    return replace(series, lam=lam)


def forecast_policy_proxy(x, p=4):
    """One-step forecast of the policy proxy from an AR(p) on first differences.

    The autoregression (with intercept) is fit by least squares on
    dx_t = x_t - x_{t-1}; the forecast is x_hat[t] = x[t-1] + predicted
    difference.  Entries 0..p are backfilled with the random-walk forecast
    x[t-1] (x[0] for the first).
    """
    x = np.asarray(x, dtype=float)
    T = x.shape[0]
    if p < 1:
        raise ValueError("lag order must be >= 1")
    if T < p + 2:
        raise ValueError(f"series too short for lag order {p}: need {p + 2}, got {T}")

    dx = np.diff(x)
    # regression rows: target dx[t], regressors dx[t-1..t-p], for t >= p+1
    targets = dx[p:]
    design = np.column_stack(
        [np.ones(targets.shape[0])] + [dx[p - k:-k] for k in range(1, p + 1)]
    )
    coef, *_ = np.linalg.lstsq(design, targets, rcond=None)

    x_hat = np.empty(T)
    x_hat[0] = x[0]
    x_hat[1:p + 1] = x[:p]
    for t in range(p + 1, T):
        pred = coef[0]
        for k in range(1, p + 1):
            pred += coef[k] * dx[t - 1 - k]
        x_hat[t] = x[t - 1] + pred
    return x_hat


def demean_proxy(series):
    """Set x_bar to the sample mean of x over the estimation window."""
    if series.x is None:
        raise ValidationError("series has no proxy column x")
    return replace(series, x_bar=float(np.mean(series.x)))
