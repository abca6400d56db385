"""Command-line pipeline: simulate, fit, classify, diagnose, compare.

Every command takes a JSON config (``--config``), applies CLI-flag
overrides, and writes its outputs into the run directory given by
``out``.  Each output file embeds the effective-config hash and seed, so
re-running an identical config reproduces every file byte for byte.
``--init`` prints a config template for the command and exits.

Exit codes: 0 success, 2 input error, 3 estimation failure,
4 empty or inconsistent task.
"""

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import classify as cls
from . import diagnostics, engine, estimation, series
from ._backend import backend_name
from .params import AcmParams, BaseParams, MsAcmParams, ParameterError, PolicyParams

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_ESTIMATION = 3
EXIT_EMPTY = 4

LOCK_NAME = ".msacm.lock"

TEMPLATES = {
    "simulate": {
        "seed": 0,
        "T": 1000,
        "out": "runs/sim",
        "params": {
            "omega": 0.85, "alpha": 0.14, "beta": 0.73, "gamma": 0.11,
            "delta": -0.78, "phi0": 0.0, "phi": [6.3], "psi": 0.0,
            "trans": [[0.96, 0.04], [0.78, 0.22]],
            "theta": [8.9, 3.3],
        },
        "exo": {"kind": "ar1", "coef": 0.98, "scale": 0.2},
        "q_neg": 0.5,
        "burn": 200,
        "init_state": None,
    },
    "fit": {
        "input": "market.csv",
        "schema": {},
        "calendar": None,
        "model": "msacm",
        "k": 2,
        "starts": 11,
        "seed": 0,
        "enable_phi0": False,
        "enable_psi": False,
        "announce": False,
        "proxy_lag": 4,
        "out": "runs/fit",
    },
    "classify": {
        "fit": "runs/fit",
        "input": "market.csv",
        "calendar": "announcements.txt",
        "kmeans_k": 3,
        "proxy_lag": 4,
        "out": "runs/fit",
    },
    "diagnose": {
        "fit": "runs/fit",
        "input": "market.csv",
        "lags": [1, 5, 10],
        "residual_kind": "onestep",
        "proxy_lag": 4,
        "out": "runs/fit",
    },
    "compare": {
        "runs": {"MARKET_A": "runs/a", "MARKET_B": "runs/b"},
        "out": "runs/compare",
    },
}


class CliError(Exception):
    def __init__(self, message, code=EXIT_INPUT):
        super().__init__(message)
        self.code = code


def _load_config(command, args):
    cfg = dict(TEMPLATES[command])
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                user = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read config {args.config}: {exc}")
        unknown = set(user) - set(cfg)
        if unknown:
            raise CliError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(user)
    for flag in ("seed", "out", "model", "k", "starts"):
        val = getattr(args, flag, None)
        if val is not None:
            key = {"model": "model", "k": "k", "starts": "starts"}.get(flag, flag)
            if key in TEMPLATES[command] or key in cfg:
                cfg[key] = val
            else:
                raise CliError(f"--{flag} does not apply to {command}")
    return cfg


def _config_hash(cfg):
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _meta_lines(cfg):
    return [f"config_hash={_config_hash(cfg)}", f"seed={cfg.get('seed', 0)}"]


def _sanitize(obj):
    """NaN/inf -> None so the JSON stays standard."""
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _sanitize(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _write_json(path, payload, cfg):
    payload = {"config_hash": _config_hash(cfg), "seed": cfg.get("seed", 0),
               "backend": backend_name(), **payload}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_sanitize(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


class _RunDir:
    """Creates the output directory and holds its lock file."""

    def __init__(self, out):
        self.path = Path(out)
        self.lock = self.path / LOCK_NAME

    def __enter__(self):
        self.path.mkdir(parents=True, exist_ok=True)
        try:
            fd = os.open(self.lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
            os.close(fd)
        except FileExistsError:
            raise CliError(f"output dir {self.path} is locked by another run "
                           f"(remove {self.lock} if stale)")
        return self.path

    def __exit__(self, *exc):
        try:
            os.unlink(self.lock)
        except OSError:
            pass
        return False


def _params_from_config(block):
    try:
        return MsAcmParams(
            base=BaseParams(block["omega"], block["alpha"], block["beta"], block["gamma"]),
            policy=PolicyParams(delta=block.get("delta", 0.0),
                                phi0=block.get("phi0", 0.0),
                                phi=tuple(block.get("phi", ())),
                                psi=block.get("psi", 0.0)),
            trans=np.array(block["trans"], dtype=float),
            theta=np.array(block["theta"], dtype=float),
        )
    except (KeyError, ParameterError, ValueError) as exc:
        raise CliError(f"invalid params block: {exc}")


def cmd_simulate(cfg):
    params = _params_from_config(cfg["params"])
    exo_cfg = cfg.get("exo") or {"kind": "zero"}
    try:
        exo = engine.ExoSpec(kind=exo_cfg.get("kind", "zero"),
                             coef=exo_cfg.get("coef", 0.0),
                             scale=exo_cfg.get("scale", 0.0))
        path = engine.simulate(params, int(cfg["T"]), exo=exo, seed=int(cfg["seed"]),
                               q_neg=float(cfg.get("q_neg", 0.5)),
                               init_state=cfg.get("init_state"),
                               burn=int(cfg.get("burn", 200)))
    except (ParameterError, ValueError) as exc:
        raise CliError(f"simulation rejected: {exc}")
    meta = _meta_lines(cfg)
    with _RunDir(cfg["out"]) as out:
        series.write_market_csv(path.series, out / "market.csv", header_lines=meta)
        with open(out / "states.csv", "w", newline="", encoding="utf-8") as fh:
            for line in meta:
                fh.write(f"# {line}\n")
            writer = csv.writer(fh)
            writer.writerow(["date", "state", "xi_true", "mu_true"])
            for t, date in enumerate(path.series.dates):
                writer.writerow([date.isoformat(), int(path.states[t]),
                                 repr(float(path.xi_true[t])), repr(float(path.mu_true[t]))])
        print(f"wrote {out / 'market.csv'} and {out / 'states.csv'} (T={cfg['T']})")
    return EXIT_OK


def _prepare_series(cfg):
    try:
        s = series.load_market_csv(cfg["input"], schema=cfg.get("schema") or None)
    except FileNotFoundError as exc:
        raise CliError(f"input not found: {exc}")
    except (series.SchemaError, series.ParseError, series.ValidationError) as exc:
        raise CliError(f"bad input CSV: {exc}")
    if s.x is not None:
        if s.x_hat is None:
            x_hat = series.forecast_policy_proxy(s.x, p=int(cfg.get("proxy_lag", 4)))
            s = series.MarketSeries(dates=s.dates, rv=s.rv, d=s.d, x=s.x,
                                    x_hat=x_hat, lam=s.lam)
        s = series.demean_proxy(s)
    if cfg.get("calendar"):
        cal = series.load_announcement_dates(cfg["calendar"])
        s = series.align_announcements(s, cal)
    return s


def _spec_from_config(cfg):
    return estimation.ModelSpec(
        variant=cfg["model"], k_regimes=int(cfg.get("k", 2)),
        enable_phi0=bool(cfg.get("enable_phi0", False)),
        enable_psi=bool(cfg.get("enable_psi", False)),
        announce=bool(cfg.get("announce", False)),
    )


def cmd_fit(cfg):
    s = _prepare_series(cfg)
    try:
        spec = _spec_from_config(cfg)
    except ValueError as exc:
        raise CliError(f"bad model spec: {exc}")
    if "delta" in spec.param_names() and s.x_hat is None:
        raise CliError(f"model {spec.variant!r} needs a proxy column x or x_hat")
    settings = estimation.FitSettings(n_starts=int(cfg["starts"]), seed=int(cfg["seed"]))
    try:
        fit = estimation.fit_qml(spec, s, settings)
    except estimation.EstimationError as exc:
        raise CliError(f"estimation failed: {exc}", code=EXIT_ESTIMATION)

    meta = _meta_lines(cfg)
    with _RunDir(cfg["out"]) as out:
        report = {
            "model": spec.variant,
            "k_regimes": spec.k_regimes,
            "enable_phi0": spec.enable_phi0,
            "enable_psi": spec.enable_psi,
            "announce": spec.announce,
            "names": fit.names,
            "estimates": dict(zip(fit.names, fit.estimates)),
            "se": dict(zip(fit.names, fit.se)),
            "loglik": fit.loglik,
            "aic": fit.aic,
            "bic": fit.bic,
            "converged": fit.converged,
            "n_starts": fit.n_starts,
            "best_start": fit.best_start,
            "iterations": fit.iterations,
            "n_obs": fit.n_obs,
            "k_params": fit.k_params,
            "per_start": fit.per_start,
            "start_box": fit.start_box,
            "se_flag": fit.se_flag,
            "input": str(cfg["input"]),
            "run_settings": {
                "sigma_init": "mean of first 50 observations",
                "xi_init": "per-regime steady state, zero proxy deviation",
                "filter_init": "ergodic distribution of the fitted chain",
                "x_bar": "sample mean of x over the estimation window",
                "nm_maxiter": settings.nm_maxiter,
                "polish_gtol": settings.polish_gtol,
            },
        }
        _write_json(out / "fit.json", report, cfg)
        if isinstance(fit.params, MsAcmParams):
            fo = engine.hamilton_kim_filter(fit.params, s)
            engine.write_filter_csv(fo, s.dates, out / "filter.csv", header_lines=meta)
        else:
            mu, _ = _acm_mu(fit.params, s)
            with open(out / "filter.csv", "w", newline="", encoding="utf-8") as fh:
                for line in meta:
                    fh.write(f"# {line}\n")
                writer = csv.writer(fh)
                writer.writerow(["date", "mu_onestep"])
                for t, date in enumerate(s.dates):
                    writer.writerow([date.isoformat(), repr(float(mu[t]))])
        with open(out / "estimates.txt", "w", encoding="utf-8") as fh:
            for line in meta:
                fh.write(f"# {line}\n")
            fh.write(fit.summary() + "\n")
        print(fit.summary())
        print(f"wrote {out / 'fit.json'}, {out / 'filter.csv'}, {out / 'estimates.txt'}")
    return EXIT_OK


def _acm_mu(params, s):
    from .memcore import acm_filter

    return acm_filter(params, s)


def _load_fit(fit_dir):
    path = Path(fit_dir) / "fit.json"
    try:
        with open(path, encoding="utf-8") as fh:
            report = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read fit report {path}: {exc}")
    spec = estimation.ModelSpec(
        variant=report["model"], k_regimes=int(report["k_regimes"]),
        enable_phi0=bool(report["enable_phi0"]),
        enable_psi=bool(report["enable_psi"]),
        announce=bool(report["announce"]),
    )
    transform = estimation.ParamTransform(spec)
    vec = np.array([report["estimates"][name] for name in transform.names])
    return spec, transform.params_from_natural(vec), report


def cmd_classify(cfg):
    spec, params, report = _load_fit(cfg["fit"])
    if not isinstance(params, MsAcmParams) or spec.k_regimes != 2:
        raise CliError("classification needs a fitted 2-regime msacm model")
    s = _prepare_series(cfg)
    if s.lam is None or s.lam.sum() == 0:
        raise CliError("no announcement dates fall inside the sample",
                       code=EXIT_EMPTY)
    fo = engine.hamilton_kim_filter(params, s)
    phi0 = report["estimates"].get("phi0", 0.0) or 0.0
    phi1 = report["estimates"]["phi_1"]
    effects = cls.announcement_deltas(fo.smoothed[:, 1], s.lam, dates=s.dates,
                                      phi0=phi0, phi1=phi1)
    if not effects:
        raise CliError("no usable announcements after alignment", code=EXIT_EMPTY)
    methods = cls.classify_all(effects, k=int(cfg.get("kmeans_k", 3)))
    ari = cls.ari_matrix(methods)

    meta = _meta_lines(cfg)
    with _RunDir(cfg["out"]) as out:
        with open(out / "announcements.csv", "w", newline="", encoding="utf-8") as fh:
            for line in meta:
                fh.write(f"# {line}\n")
            writer = csv.writer(fh)
            writer.writerow(["date", "p_prev", "p_t", "delta_p",
                             "group_sp_level", "group_sp_diff", "group_kmeans"])
            rows = zip(methods["sp_level"].effects, methods["sp_diff"].effects,
                       methods["kmeans"].effects)
            for lv, df, km in rows:
                writer.writerow([lv.date.isoformat(), repr(float(lv.p_prev)), repr(float(lv.p_t)),
                                 repr(float(lv.delta_p)), lv.group, df.group, km.group])
        summary = {
            "n_announcements": len(effects),
            "phi_1": phi1,
            "methods": {
                name: {
                    "counts": c.group_counts,
                    "centers": c.group_centers,
                    "U": c.U,
                    "high_plank": c.high_plank,
                    "flags": list(c.flags),
                }
                for name, c in methods.items()
            },
            "ari": ari,
        }
        _write_json(out / "classification.json", summary, cfg)
        print(json.dumps(_sanitize(summary["methods"]), indent=2, sort_keys=True))
        print(f"wrote {out / 'announcements.csv'}, {out / 'classification.json'}")
    return EXIT_OK


def cmd_diagnose(cfg):
    spec, params, report = _load_fit(cfg["fit"])
    s = _prepare_series(cfg)
    lags = tuple(int(v) for v in cfg.get("lags", (1, 5, 10)))
    if isinstance(params, MsAcmParams):
        fo = engine.hamilton_kim_filter(params, s)
        pi = engine.ergodic_distribution(params.trans)
        rep = diagnostics.build_residual_report(
            None, fo, s, params.theta, pi, lags=lags,
            kind=cfg.get("residual_kind", "onestep"))
    else:
        mu, _ = _acm_mu(params, s)
        eps = diagnostics.acm_residuals(s, mu)
        lb = diagnostics.ljung_box(eps, lags)
        ks_stat, thr = diagnostics.ks_mixture_gamma(eps, [params.theta], [1.0])
        rep = diagnostics.ResidualReport(
            residuals=eps, mean=float(eps.mean()), sd=float(eps.std(ddof=1)),
            lb_stats={L: v[0] for L, v in lb.items()},
            lb_pvalues={L: v[1] for L, v in lb.items()},
            ks_stat=ks_stat, ks_thresholds=thr)

    meta = _meta_lines(cfg)
    with _RunDir(cfg["out"]) as out:
        payload = {
            "mean": rep.mean,
            "sd": rep.sd,
            "ljung_box": {str(L): {"stat": rep.lb_stats[L], "pvalue": rep.lb_pvalues[L]}
                          for L in rep.lb_stats},
            "ks_stat": rep.ks_stat,
            "ks_thresholds": {f"{lvl:.2f}": v for lvl, v in rep.ks_thresholds.items()},
        }
        _write_json(out / "diagnostics.json", payload, cfg)
        with open(out / "residuals.csv", "w", newline="", encoding="utf-8") as fh:
            for line in meta:
                fh.write(f"# {line}\n")
            writer = csv.writer(fh)
            writer.writerow(["date", "residual"])
            for t, date in enumerate(s.dates):
                writer.writerow([date.isoformat(), repr(float(rep.residuals[t]))])
        print(json.dumps(_sanitize(payload), indent=2, sort_keys=True))
        print(f"wrote {out / 'diagnostics.json'}, {out / 'residuals.csv'}")
    return EXIT_OK


def _read_csv_rows(path):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            lines = [ln for ln in fh if not ln.startswith("#")]
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}")
    return list(csv.DictReader(lines))


def cmd_compare(cfg):
    runs = cfg.get("runs") or {}
    if len(runs) < 2:
        raise CliError("compare needs at least two runs", code=EXIT_EMPTY)
    labels = {}
    resids = {}
    for name, run_dir in runs.items():
        ann = _read_csv_rows(Path(run_dir) / "announcements.csv")
        labels[name] = {
            "dates": [r["date"] for r in ann],
            "sp_level": [cls.merged_group(r["group_sp_level"]) for r in ann],
            "sp_diff": [r["group_sp_diff"] for r in ann],
            "kmeans": [r["group_kmeans"] for r in ann],
        }
        res = _read_csv_rows(Path(run_dir) / "residuals.csv")
        resids[name] = ([r["date"] for r in res],
                        np.array([float(r["residual"]) for r in res]))
    names = sorted(runs)
    ref = labels[names[0]]["dates"]
    for name in names[1:]:
        if labels[name]["dates"] != ref:
            diff = sorted(set(labels[name]["dates"]) ^ set(ref))
            raise CliError(f"announcement calendars differ for {name}: {diff}",
                           code=EXIT_EMPTY)

    pair_rows = []
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            for method in cls.METHODS:
                pair_rows.append({
                    "market_a": a, "market_b": b, "method": method,
                    "ari": cls.adjusted_rand(labels[a][method], labels[b][method]),
                })
    try:
        xcorr = diagnostics.cross_correlation_lag1(resids)
    except ValueError as exc:
        raise CliError(str(exc), code=EXIT_EMPTY)

    meta = _meta_lines(cfg)
    with _RunDir(cfg["out"]) as out:
        with open(out / "compare_ari.csv", "w", newline="", encoding="utf-8") as fh:
            for line in meta:
                fh.write(f"# {line}\n")
            writer = csv.writer(fh)
            writer.writerow(["market_a", "market_b", "method", "ari"])
            for row in pair_rows:
                writer.writerow([row["market_a"], row["market_b"], row["method"],
                                 repr(float(row["ari"]))])
        with open(out / "compare_xcorr.csv", "w", newline="", encoding="utf-8") as fh:
            for line in meta:
                fh.write(f"# {line}\n")
            writer = csv.writer(fh)
            writer.writerow(["market_a", "market_b", "xcorr_lag1"])
            for (a, b), v in sorted(xcorr.items()):
                writer.writerow([a, b, repr(float(v))])
        payload = {
            "ari": pair_rows,
            "xcorr_lag1": {f"{a}->{b}": v for (a, b), v in sorted(xcorr.items())},
        }
        _write_json(out / "compare.json", payload, cfg)
        print(f"wrote {out / 'compare_ari.csv'}, {out / 'compare_xcorr.csv'}, "
              f"{out / 'compare.json'}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "classify": cmd_classify,
    "diagnose": cmd_diagnose,
    "compare": cmd_compare,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="msacm",
        description="Markov-switching composite MEM estimation and "
                    "announcement classification",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"{name} step")
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--init", action="store_true",
                       help="print a config template and exit")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory")
        if name == "fit":
            p.add_argument("--model", choices=estimation.VARIANTS, default=None)
            p.add_argument("--k", type=int, choices=(2, 3), default=None)
            p.add_argument("--starts", type=int, default=None)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.init:
        print(json.dumps(TEMPLATES[args.command], indent=2, sort_keys=True))
        return EXIT_OK
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            cfg = _load_config(args.command, args)
            return COMMANDS[args.command](cfg)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
