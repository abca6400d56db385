import datetime as dt

import numpy as np
import pytest

from msacm.series import (
    AnnouncementCalendar,
    MarketSeries,
    ParseError,
    SchemaError,
    ValidationError,
    align_announcements,
    demean_proxy,
    forecast_policy_proxy,
    load_announcement_dates,
    load_market_csv,
    write_market_csv,
)

from conftest import make_series


def write_lines(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


class TestLoadMarketCsv:
    def test_sign_rule_from_returns(self, tmp_path):
        f = tmp_path / "m.csv"
        write_lines(f, ["date,rv,ret",
                        "2009-06-01,12.4,-0.003",
                        "2009-06-02,11.0,0.004"])
        s = load_market_csv(f)
        assert s.d[0] == 1.0 and s.d[1] == 0.0

    def test_nonpositive_rv_rejected_with_row(self, tmp_path):
        f = tmp_path / "m.csv"
        write_lines(f, ["date,rv,d", "2009-06-01,0,0", "2009-06-02,11.0,0"])
        with pytest.raises(ValidationError, match="row 0"):
            load_market_csv(f)

    def test_rows_sorted_and_d_per_row(self, tmp_path):
        f = tmp_path / "m.csv"
        write_lines(f, ["date,rv,ret",
                        "2009-06-03,13.0,0.01",
                        "2009-06-01,12.0,-0.01",
                        "2009-06-02,11.0,0.02"])
        s = load_market_csv(f)
        assert [d.isoformat() for d in s.dates] == [
            "2009-06-01", "2009-06-02", "2009-06-03"]
        assert list(s.d) == [1.0, 0.0, 0.0]

    def test_missing_column_named(self, tmp_path):
        f = tmp_path / "m.csv"
        write_lines(f, ["date,ret", "2009-06-01,0.1"])
        with pytest.raises(SchemaError, match="'rv'"):
            load_market_csv(f)

    def test_needs_ret_or_d(self, tmp_path):
        f = tmp_path / "m.csv"
        write_lines(f, ["date,rv", "2009-06-01,10"])
        with pytest.raises(SchemaError):
            load_market_csv(f)

    def test_bad_date_has_row_index(self, tmp_path):
        f = tmp_path / "m.csv"
        write_lines(f, ["date,rv,d", "2009-06-01,10,0", "June 2nd,11,0"])
        with pytest.raises(ParseError, match="row 1"):
            load_market_csv(f)

    def test_duplicate_dates_rejected(self, tmp_path):
        f = tmp_path / "m.csv"
        write_lines(f, ["date,rv,d", "2009-06-01,10,0", "2009-06-01,11,0"])
        with pytest.raises(ValidationError, match="duplicate"):
            load_market_csv(f)

    def test_schema_renames_columns(self, tmp_path):
        f = tmp_path / "m.csv"
        write_lines(f, ["day,vol,neg", "2009-06-01,10,1", "2009-06-02,11,0"])
        s = load_market_csv(f, schema={"date": "day", "rv": "vol", "d": "neg"})
        assert s.rv[1] == 11.0 and s.d[0] == 1.0

    def test_explicit_d_wins_over_ret(self, tmp_path):
        f = tmp_path / "m.csv"
        write_lines(f, ["date,rv,ret,d", "2009-06-01,10,-0.5,0", "2009-06-02,11,0.5,1"])
        s = load_market_csv(f)
        assert list(s.d) == [0.0, 1.0]


def test_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(1)
    s = make_series(rv=rng.uniform(5, 30, 40),
                    d=(rng.random(40) < 0.5).astype(float),
                    x=rng.normal(size=40), x_hat=rng.normal(size=40),
                    lam=(rng.random(40) < 0.1).astype(float))
    f = tmp_path / "round.csv"
    write_market_csv(s, f, header_lines=["seed=1"])
    s2 = load_market_csv(f)
    assert s2.dates == s.dates
    for name in ("rv", "d", "x", "x_hat", "lam"):
        np.testing.assert_array_equal(getattr(s2, name), getattr(s, name))


def test_series_validation():
    with pytest.raises(ValidationError):
        make_series(rv=[10.0])  # T < 2
    with pytest.raises(ValidationError):
        make_series(rv=[10.0, 11.0], d=[0.0, 2.0])
    s = make_series(rv=[10.0, 11.0])
    assert list(s.lam) == [0.0, 0.0]
    with pytest.raises(ValidationError):
        s.xdev()


class TestAlignAnnouncements:
    def test_membership(self):
        s = make_series(rv=[10, 11, 12], start=dt.date(2011, 8, 3))
        cal = AnnouncementCalendar(frozenset({dt.date(2011, 8, 4)}))
        out = align_announcements(s, cal)
        assert list(out.lam) == [0.0, 1.0, 0.0]

    def test_absent_date_warns(self):
        s = make_series(rv=[10, 11], start=dt.date(2011, 8, 1))
        cal = AnnouncementCalendar(frozenset({dt.date(2011, 8, 6)}))
        with pytest.warns(UserWarning, match="2011-08-06"):
            out = align_announcements(s, cal)
        assert out.lam.sum() == 0

    def test_empty_calendar(self):
        s = make_series(rv=[10, 11, 12])
        out = align_announcements(s, AnnouncementCalendar(frozenset()))
        assert out.lam.sum() == 0


def test_announcement_file_comments(tmp_path):
    f = tmp_path / "ann.txt"
    f.write_text("# calendar\n2011-08-04\n2012-08-02  # rates\n\n", encoding="utf-8")
    cal = load_announcement_dates(f)
    assert cal.dates == frozenset({dt.date(2011, 8, 4), dt.date(2012, 8, 2)})


class TestForecastPolicyProxy:
    def test_constant_series(self):
        x = np.full(30, 3.7)
        np.testing.assert_allclose(forecast_policy_proxy(x, p=4), x, atol=1e-12)

    def test_pure_trend_exact(self):
        x = np.arange(30, dtype=float)
        x_hat = forecast_policy_proxy(x, p=1)
        np.testing.assert_allclose(x_hat[2:], x[2:], atol=1e-10)

    def test_too_short(self):
        with pytest.raises(ValueError, match="too short"):
            forecast_policy_proxy(np.arange(5.0), p=4)

    def test_ar1_coefficient_recovery(self):
        rng = np.random.default_rng(7)
        T = 5000
        dx = np.empty(T)
        dx[0] = 0.0
        eps = rng.normal(scale=0.1, size=T)
        for t in range(1, T):
            dx[t] = 0.5 * dx[t - 1] + eps[t]
        x = np.cumsum(dx)
        x_hat = forecast_policy_proxy(x, p=1)
        # implied coefficient from the fitted forecasts: regress (x_hat - lag x) on lag dx
        pred = x_hat[2:] - x[1:-1]
        coef = np.polyfit(dx[1:-1], pred, 1)[0]
        assert abs(coef - 0.5) < 0.05

    def test_exact_ar_in_differences_reproduced(self):
        # noiseless AR(2) differences: forecasts exact from index p+2 on
        p = 2
        a = (0.5, -0.3)
        dx = [0.4, -0.2]
        for _ in range(40):
            dx.append(a[0] * dx[-1] + a[1] * dx[-2])
        x = np.concatenate([[0.0], np.cumsum(dx)])
        x_hat = forecast_policy_proxy(x, p=p)
        np.testing.assert_allclose(x_hat[p + 2:], x[p + 2:], atol=1e-10)


def test_demean_proxy():
    s = make_series(rv=[10, 11, 12], x=[1.0, 2.0, 3.0], x_hat=[1.0, 2.0, 3.0])
    out = demean_proxy(s)
    assert out.x_bar == 2.0
    np.testing.assert_allclose(out.xdev(), [-1.0, 0.0, 1.0])
    allsame = demean_proxy(make_series(rv=[10, 11], x=[5.0, 5.0], x_hat=[5.0, 5.0]))
    assert np.all(allsame.xdev() == 0.0)
