import numpy as np
import pytest

from lmelineup.bootstrap import (BootstrapConfig, NullModelKind, bootstrap_refit,
                                 bootstrap_statistic, simulate_contaminated,
                                 simulate_response)
from lmelineup.data import ModelSpec, build_design, column, intercept, synth_dataset
from lmelineup.fit import CovarianceSpec, FitOptions, FittedLME, fit


def radon_design(seed=0, g=15):
    ds = synth_dataset("radon_like", {"g": g}, seed=seed)
    spec = ModelSpec("y", (intercept(), column("floor")),
                     (intercept(), column("floor")), "group")
    return build_design(spec, ds)


def oneway_design(seed=0, g=8, n=6):
    ds = synth_dataset("balanced_oneway", {"g": g, "n": n}, seed=seed)
    spec = ModelSpec("y", (intercept(),), (intercept(),), "group")
    return build_design(spec, ds)


def degenerate_fit(design, beta, D=None, sigma2=0.0):
    q = design.q
    return FittedLME(beta=np.asarray(beta, dtype=float),
                     cov=CovarianceSpec(D=D if D is not None else np.zeros((q, q)),
                                        sigma2=sigma2),
                     theta=np.zeros(q * (q + 1) // 2), criterion=0.0,
                     method="REML", converged=True, n_iter=0)


class TestSimulate:
    def test_zero_noise_returns_mean_exactly(self):
        d = oneway_design()
        f = degenerate_fit(d, beta=[2.5])
        ys = simulate_response(f, d, np.random.default_rng(0))
        for gr, y in zip(d.groups, ys):
            assert np.array_equal(y, gr.X @ f.beta)

    def test_same_seed_identical(self):
        d = radon_design()
        f = fit(d)
        y1 = simulate_response(f, d, np.random.default_rng(42))
        y2 = simulate_response(f, d, np.random.default_rng(42))
        for a, b in zip(y1, y2):
            assert np.array_equal(a, b)

    def test_mean_matches_fixed_part(self):
        # Monte Carlo oracle: the pooled mean over replicates approaches the
        # marginal mean within a few standard errors
        d = oneway_design(g=6, n=4)
        f = fit(d)
        rng = np.random.default_rng(7)
        B = 2000
        mu = np.concatenate([gr.X @ f.beta for gr in d.groups])
        total_var = f.cov.D[0, 0] + f.cov.sigma2
        acc = np.zeros(len(mu))
        for _ in range(B):
            acc += np.concatenate(simulate_response(f, d, rng))
        mc_mean = acc / B
        se = np.sqrt(total_var / B)
        assert np.all(np.abs(mc_mean - mu) < 4 * se + 1e-12)

    def test_pooled_variance_approaches_sigma2(self):
        d = oneway_design(g=10, n=8)
        f = fit(d)
        rng = np.random.default_rng(8)
        B = 2000
        # remove the group effect by centering within group per replicate
        devs = []
        for _ in range(B):
            for y, gr in zip(simulate_response(f, d, rng), d.groups):
                devs.append(y - y.mean())
        pooled = np.concatenate(devs)
        est = pooled.var() * (8 / 7.0)  # within-group dof correction
        se = f.cov.sigma2 * np.sqrt(2.0 / (B * 10 * 7))
        assert abs(est - f.cov.sigma2) < 4 * se


class TestContaminated:
    def test_large_dof_covariance_matches_D(self):
        d = radon_design(g=4)
        D = np.array([[0.5, 0.1], [0.1, 0.3]])
        f = degenerate_fit(d, beta=[0.0, 0.0], D=D, sigma2=0.0)
        rng = np.random.default_rng(9)
        # with sigma2 = 0 and Z = X = [1, floor], responses expose b directly
        draws = []
        for _ in range(4000):
            for y, gr in zip(simulate_contaminated(f, d, nu=400.0, rng=rng), d.groups):
                # recover b from two distinct rows when available
                if np.ptp(gr.Z[:, 1]) > 0:
                    i1 = int(np.argmin(gr.Z[:, 1]))
                    i2 = int(np.argmax(gr.Z[:, 1]))
                    b1 = y[i1]
                    b2 = y[i2] - y[i1]
                    draws.append([b1, b2])
        draws = np.array(draws)
        emp = np.cov(draws.T)
        assert np.allclose(emp, D, atol=0.06)

    def test_nu3_kurtosis_exceeds_normal(self):
        d = radon_design(g=5)
        D = np.array([[1.0, 0.0], [0.0, 1.0]])
        f = degenerate_fit(d, beta=[0.0, 0.0], D=D, sigma2=0.0)
        rng = np.random.default_rng(10)
        firsts = []
        for _ in range(4000):
            ys = simulate_contaminated(f, d, nu=3.0, rng=rng)
            for y in ys:
                firsts.append(y[0])  # equals b_0 of that group
        z = np.array(firsts)
        kurt = np.mean((z - z.mean()) ** 4) / z.var() ** 2
        assert kurt > 4.0

    def test_zero_scale_gives_zero_effects(self):
        d = oneway_design()
        f = degenerate_fit(d, beta=[1.0], sigma2=0.0)
        ys = simulate_contaminated(f, d, nu=3.0, rng=np.random.default_rng(11))
        for gr, y in zip(d.groups, ys):
            assert np.array_equal(y, gr.X @ f.beta)

    def test_nu_must_exceed_two(self):
        d = oneway_design()
        f = degenerate_fit(d, beta=[1.0], sigma2=1.0)
        with pytest.raises(ValueError, match="nu"):
            simulate_contaminated(f, d, nu=2.0, rng=np.random.default_rng(0))


class TestBootstrapRefit:
    def test_deterministic_and_parallel_agree(self):
        d = radon_design(g=10)
        f = fit(d)
        cfg_serial = BootstrapConfig(B=6, seed=123, n_jobs=1)
        cfg_parallel = BootstrapConfig(B=6, seed=123, n_jobs=3)
        r1 = bootstrap_refit(f, d, NullModelKind.same_model(), cfg_serial)
        r2 = bootstrap_refit(f, d, NullModelKind.same_model(), cfg_serial)
        r3 = bootstrap_refit(f, d, NullModelKind.same_model(), cfg_parallel)
        for a, b in zip(r1, r2):
            for ea, eb in zip(a.residuals.level1, b.residuals.level1):
                assert np.array_equal(ea, eb)
        for a, c in zip(r1, r3):
            for ea, ec in zip(a.residuals.level1, c.residuals.level1):
                assert np.array_equal(ea, ec)

    def test_drop_fixed_null_keeps_Z_structure(self):
        d = radon_design(g=8)
        f = fit(d)
        cfg = BootstrapConfig(B=2, seed=5)
        reps = bootstrap_refit(f, d, NullModelKind.drop_fixed(1), cfg)
        for rep in reps:
            assert rep.design.q == d.q
            assert rep.design.p == d.p - 1
            for sim_gr, gr in zip(rep.design.groups, d.groups):
                assert np.array_equal(sim_gr.Z, gr.Z)

    def test_drop_random_null_keeps_X_structure(self):
        d = radon_design(g=8)
        f = fit(d)
        cfg = BootstrapConfig(B=2, seed=6)
        reps = bootstrap_refit(f, d, NullModelKind.drop_random(1), cfg)
        for rep in reps:
            assert rep.design.q == d.q - 1
            for sim_gr, gr in zip(rep.design.groups, d.groups):
                assert np.array_equal(sim_gr.X, gr.X)

    def test_refits_use_full_model(self):
        d = radon_design(g=8)
        f = fit(d)
        cfg = BootstrapConfig(B=2, seed=7)
        reps = bootstrap_refit(f, d, NullModelKind.drop_random(1), cfg)
        for rep in reps:
            assert rep.fitted.cov.q == d.q  # proposed model, not the reduced one

    def test_ordered_by_replicate_index(self):
        d = radon_design(g=6)
        f = fit(d)
        reps = bootstrap_refit(f, d, NullModelKind.same_model(),
                               BootstrapConfig(B=5, seed=8, n_jobs=2))
        assert [r.index for r in reps] == [0, 1, 2, 3, 4]


class TestBootstrapStatistic:
    def test_constant_statistic_gives_p_one(self):
        d = oneway_design()
        f = fit(d)
        cfg = BootstrapConfig(B=30, seed=9, refit=False)
        dist = bootstrap_statistic(f, d, lambda des, ft: 1.0, cfg)
        assert dist.p_upper == 1.0

    def test_extreme_observed_gives_smallest_p(self):
        d = oneway_design()
        f = fit(d)
        cfg = BootstrapConfig(B=19, seed=10, refit=False)

        def stat(des, ft):
            pooled = np.concatenate([gr.y for gr in des.groups])
            return float(np.abs(pooled).max())

        # manufacture an observed design whose statistic exceeds any replicate
        spiked = d.with_responses([gr.y + 1000.0 for gr in d.groups])
        dist = bootstrap_statistic(f, spiked, stat, cfg)
        assert dist.p_upper == pytest.approx(1.0 / 20.0)

    def test_nonconvergent_replicates_flagged_and_excluded(self):
        d = radon_design(g=10)
        f = fit(d)
        starved = FitOptions(max_evals=3, max_restarts=1)
        cfg = BootstrapConfig(B=4, seed=11, refit=True)
        dist = bootstrap_statistic(f, d, lambda des, ft: float(ft.criterion), cfg,
                                   opts=starved)
        assert not dist.converged.any()
        assert dist.p_upper == 1.0  # nothing left in the tail but the observed

    def test_ndjson_export_round_trips(self):
        import json

        d = oneway_design()
        f = fit(d)
        cfg = BootstrapConfig(B=3, seed=12, refit=False)
        dist = bootstrap_statistic(f, d, lambda des, ft: 2.0, cfg)
        lines = dist.to_ndjson(seed=12).strip().splitlines()
        assert len(lines) == 3
        rec = json.loads(lines[0])
        assert rec["replicate"] == 0
        assert rec["converged"] is True
        assert rec["statistic"] == 2.0


class TestConfig:
    def test_bad_B(self):
        with pytest.raises(ValueError):
            BootstrapConfig(B=0, seed=1)

    def test_bad_t_dof(self):
        with pytest.raises(ValueError):
            BootstrapConfig(B=1, seed=1, re_dist=("t", 2.0))

    def test_unknown_null_variant(self):
        with pytest.raises(ValueError):
            NullModelKind("bogus")

    def test_drop_needs_index(self):
        with pytest.raises(ValueError):
            NullModelKind("drop_fixed")
