import math

import numpy as np
import pytest

from msacm import engine
from msacm._backend import kernels
from msacm.memcore import acm_filter, sigma_init
from msacm.params import AcmParams, BaseParams, MsAcmParams, ParameterError, PolicyParams

from conftest import cac40_params, make_series, random_admissible_params


class TestErgodicDistribution:
    def test_symmetric_two_state(self):
        pi = engine.ergodic_distribution(np.array([[0.9, 0.1], [0.1, 0.9]]))
        np.testing.assert_allclose(pi, [0.5, 0.5], atol=1e-12)

    def test_closed_form_two_state(self):
        pi = engine.ergodic_distribution(np.array([[0.964, 0.036], [0.778, 0.222]]))
        assert pi[1] == pytest.approx(0.036 / 0.814, abs=1e-12)

    def test_random_matrices_fixed_point(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            K = rng.integers(2, 5)
            P = rng.uniform(0.05, 1.0, size=(K, K))
            P /= P.sum(axis=1, keepdims=True)
            pi = engine.ergodic_distribution(P)
            np.testing.assert_allclose(pi @ P, pi, atol=1e-12)
            assert pi.sum() == pytest.approx(1.0, abs=1e-12)

    def test_reducible_raises(self):
        with pytest.raises(np.linalg.LinAlgError):
            engine.ergodic_distribution(np.eye(2))


class TestExpectedDurations:
    def test_published_day_counts(self):
        dur = engine.expected_durations(np.array([[0.981, 0.019], [0.7, 0.3]]))
        assert round(dur[0]) == 53
        dur = engine.expected_durations(np.array([[0.928, 0.072], [0.7, 0.3]]))
        assert round(dur[0]) == 14
        dur = engine.expected_durations(np.array([[0.964, 0.036], [0.778, 0.222]]))
        assert math.floor(dur[1]) == 1

    def test_absorbing_state_infinite(self):
        dur = engine.expected_durations(np.array([[1.0, 0.0], [0.5, 0.5]]))
        assert math.isinf(dur[0])


class TestHamiltonKimFilter:
    def test_single_regime_reduction_matches_acm(self):
        rng = np.random.default_rng(8)
        ms = MsAcmParams(
            base=BaseParams(0.8, 0.12, 0.7, 0.1),
            policy=PolicyParams(delta=-0.4, phi0=0.0, phi=(), psi=0.3),
            trans=np.array([[1.0]]), theta=np.array([6.0]),
        )
        s = make_series(rv=rng.uniform(5, 20, 400), d=(rng.random(400) < 0.5),
                        x=rng.normal(size=400), x_hat=rng.normal(size=400), x_bar=0.0)
        fo = engine.hamilton_kim_filter(ms, s)
        acm = AcmParams(base=ms.base, theta=6.0, delta=-0.4, phi0=0.0, psi=0.3)
        mu, ll = acm_filter(acm, s)
        assert abs(fo.loglik - ll) < 1e-12 * abs(ll)
        np.testing.assert_allclose(fo.mu_onestep, mu, rtol=1e-12)

    def test_exchangeable_regimes_ignore_transition(self, cac40):
        rng = np.random.default_rng(9)
        s = engine.simulate(cac40, T=300, seed=4).series
        base = cac40.base
        lls = []
        for _ in range(5):
            diag = rng.uniform(0.2, 0.95, size=2)
            trans = np.array([[diag[0], 1 - diag[0]], [1 - diag[1], diag[1]]])
            p = MsAcmParams(base=base,
                            policy=PolicyParams(delta=0.0, phi0=0.0, phi=(0.0,), psi=0.2),
                            trans=trans, theta=np.array([5.0, 5.0]))
            lls.append(engine.hamilton_kim_filter(p, s).loglik)
        assert max(lls) - min(lls) < 1e-9

    def test_probability_rows_sum_to_one(self):
        rng = np.random.default_rng(10)
        for k in (2, 3):
            p = random_admissible_params(rng, K=k, psi=0.3)
            s = engine.simulate(p, T=200, seed=int(rng.integers(1 << 16)),
                                exo=engine.ExoSpec("ar1", 0.9, 0.2)).series
            fo = engine.hamilton_kim_filter(p, s)
            for mat in (fo.predicted, fo.filtered, fo.smoothed):
                np.testing.assert_allclose(mat.sum(axis=1), 1.0, atol=1e-10)
                assert ((mat >= 0) & (mat <= 1 + 1e-12)).all()

    def test_smoother_terminal_condition(self, cac40):
        s = engine.simulate(cac40, T=150, seed=12).series
        fo = engine.hamilton_kim_filter(cac40, s)
        np.testing.assert_array_equal(fo.smoothed[-1], fo.filtered[-1])

    def test_nonpositive_mu_flags_index(self):
        p = MsAcmParams(
            base=BaseParams(0.5, 0.05, 0.5, 0.0),
            policy=PolicyParams(delta=-50.0, phi0=0.0, phi=(1.0,), psi=0.0),
            trans=np.array([[0.9, 0.1], [0.5, 0.5]]), theta=np.array([5.0, 5.0]),
        )
        s = make_series(rv=np.full(50, 10.0), x=np.full(50, 1.0),
                        x_hat=np.full(50, 1.0), x_bar=0.0)
        fo = engine.hamilton_kim_filter(p, s)
        assert fo.loglik == -math.inf and fo.fail_index == 0

    def test_relabeling_invariance(self):
        # permuting regimes (released ordering constraint) leaves loglik unchanged
        rng = np.random.default_rng(13)
        for _ in range(10):
            p = random_admissible_params(rng, K=2, psi=0.25)
            s = engine.simulate(p, T=120, seed=int(rng.integers(1 << 16)),
                                exo=engine.ExoSpec("ar1", 0.9, 0.2)).series
            rv = np.ascontiguousarray(s.rv)
            d = np.ascontiguousarray(s.d)
            xdev = np.ascontiguousarray(s.xdev())
            inter = p.intercepts()
            pi0 = engine.ergodic_distribution(p.trans)
            xi0 = inter / (1.0 - p.policy.psi)
            args = dict(rv=rv, d=d, xdev=xdev, omega=p.base.omega, alpha=p.base.alpha,
                        beta=p.base.beta, gamma=p.base.gamma, delta=p.policy.delta,
                        psi=p.policy.psi, sigma0=sigma_init(rv))
            ll = kernels.ms_forward(
                args["rv"], args["d"], args["xdev"], args["omega"], args["alpha"],
                args["beta"], args["gamma"], args["delta"], args["psi"],
                np.ascontiguousarray(inter), p.theta, p.trans,
                np.ascontiguousarray(pi0), np.ascontiguousarray(xi0),
                args["sigma0"])[2]
            perm = np.array([1, 0])
            trans_p = p.trans[np.ix_(perm, perm)]
            ll_p = kernels.ms_forward(
                args["rv"], args["d"], args["xdev"], args["omega"], args["alpha"],
                args["beta"], args["gamma"], args["delta"], args["psi"],
                np.ascontiguousarray(inter[perm]), np.ascontiguousarray(p.theta[perm]),
                np.ascontiguousarray(trans_p),
                np.ascontiguousarray(pi0[perm]),
                np.ascontiguousarray(xi0[perm]), args["sigma0"])[2]
            assert abs(ll - ll_p) < 1e-10 * max(1.0, abs(ll))


class TestExactPathLoglik:
    def test_two_step_hand_enumeration(self, cac40):
        # with psi=0 the pre-sample regime integrates out: the likelihood is
        # sum over (s0, s1) of pi[s0] p[s0,s1] f0(s0) f1(s1)
        s = engine.simulate(cac40, T=2, seed=3).series
        ll = engine.exact_path_loglik(cac40, s)
        pi = engine.ergodic_distribution(cac40.trans)
        from msacm.memcore import gamma_log_density

        inter = cac40.intercepts()
        sig0 = sigma_init(s.rv)
        sig1 = (cac40.base.omega + cac40.base.alpha * s.rv[0]
                + cac40.base.beta * sig0 + cac40.base.gamma * s.d[0] * s.rv[0])
        dev = cac40.policy.delta * s.xdev()

        def f(t, j, sig):
            return math.exp(gamma_log_density(
                s.rv[t], sig + inter[j] + dev[t], cac40.theta[j]))

        total = sum(
            pi[s0] * cac40.trans[s0, s1] * f(0, s0, sig0) * f(1, s1, sig1)
            for s0 in range(2) for s1 in range(2))
        assert ll == pytest.approx(math.log(total), rel=1e-10)

    def test_lossless_collapse_when_psi_zero(self):
        rng = np.random.default_rng(17)
        for _ in range(10):
            p = random_admissible_params(rng, K=2, psi=0.0)
            s = engine.simulate(p, T=10, seed=int(rng.integers(1 << 16)),
                                exo=engine.ExoSpec("ar1", 0.9, 0.2)).series
            fo = engine.hamilton_kim_filter(p, s)
            ex = engine.exact_path_loglik(p, s)
            assert abs(fo.loglik - ex) < 1e-10 * abs(ex)

    def test_collapse_bias_small_when_psi_positive(self):
        rng = np.random.default_rng(18)
        for psi in (0.2, 0.4):
            p = random_admissible_params(rng, K=2, psi=psi)
            s = engine.simulate(p, T=12, seed=int(rng.integers(1 << 16)),
                                exo=engine.ExoSpec("ar1", 0.9, 0.2)).series
            fo = engine.hamilton_kim_filter(p, s)
            ex = engine.exact_path_loglik(p, s)
            assert abs(fo.loglik - ex) / abs(ex) < 1e-2

    def test_size_guard(self, cac40):
        s = engine.simulate(cac40, T=100, seed=3).series
        with pytest.raises(ValueError, match="enumeration"):
            engine.exact_path_loglik(cac40, s)


def _step_weights(params, pi, t):
    # Pr[s_t = j] for the stationary chain is the ergodic distribution itself
    return pi


class TestSimulate:
    def test_degenerate_gamma_concentrates(self, cac40):
        p = MsAcmParams(base=cac40.base, policy=cac40.policy, trans=cac40.trans,
                        theta=np.array([1e6, 1e6]))
        path = engine.simulate(p, T=300, seed=1)
        rel = np.abs(path.series.rv - path.mu_true) / path.mu_true
        assert rel.max() < 0.01

    def test_absorbing_chain_stays_put(self, cac40):
        p = MsAcmParams(base=cac40.base, policy=cac40.policy,
                        trans=np.eye(2), theta=cac40.theta)
        path = engine.simulate(p, T=100, seed=2, init_state=0)
        assert (path.states == 0).all()

    def test_ergodic_fraction_published_chain(self, cac40):
        path = engine.simulate(cac40, T=200000, seed=7)
        frac = path.states.mean()
        assert abs(frac - 0.036 / 0.814) < 0.003

    def test_deterministic_given_seed(self, cac40):
        a = engine.simulate(cac40, T=50, seed=42, exo=engine.ExoSpec("ar1", 0.9, 0.2))
        b = engine.simulate(cac40, T=50, seed=42, exo=engine.ExoSpec("ar1", 0.9, 0.2))
        np.testing.assert_array_equal(a.series.rv, b.series.rv)
        np.testing.assert_array_equal(a.states, b.states)

    def test_inadmissible_params_rejected(self):
        with pytest.raises(ParameterError):
            BaseParams(omega=-1.0, alpha=0.1, beta=0.7, gamma=0.1)
        with pytest.raises(ParameterError):
            PolicyParams(psi=1.5)
        with pytest.raises(ParameterError):
            MsAcmParams(base=BaseParams(1.0, 0.1, 0.7, 0.1),
                        policy=PolicyParams(phi=(1.0,)),
                        trans=np.array([[0.9, 0.2], [0.5, 0.5]]),
                        theta=np.array([5.0, 5.0]))


def test_smoothed_mode_recovers_well_separated_states(cac40):
    # regression guard: sharp regimes => smoothed mode matches truth on >= 90% of days
    path = engine.simulate(cac40, T=3000, seed=11,
                           exo=engine.ExoSpec("ar1", 0.98, 0.2))
    fo = engine.hamilton_kim_filter(cac40, path.series)
    agree = (fo.smoothed.argmax(axis=1) == path.states).mean()
    assert agree >= 0.90


def test_filter_csv_roundtrip(tmp_path, cac40):
    path = engine.simulate(cac40, T=40, seed=5)
    fo = engine.hamilton_kim_filter(cac40, path.series)
    out = tmp_path / "filter.csv"
    engine.write_filter_csv(fo, path.series.dates, out, header_lines=["seed=5"])
    import csv

    with open(out) as fh:
        rows = list(csv.DictReader(ln for ln in fh if not ln.startswith("#")))
    assert len(rows) == 40
    assert float(rows[7]["smoothed_1"]) == fo.smoothed[7, 1]
