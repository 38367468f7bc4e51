import numpy as np
import pytest

from lmelineup.data import ModelSpec, build_design, column, intercept, synth_dataset
from lmelineup.lineup import reveal
from lmelineup.observers import accuracy_pick, panel_score, pick_most_discrepant
from lmelineup.protocol import (covariate_residual_lineup, fixed_effect_lineup,
                                homogeneity_cyclone_lineup, homogeneity_dotplot_lineup,
                                qq_lineup, random_slope_lineup, re_correlation_lineup)
from lmelineup.svg import render_svg

M = 6  # small lineups keep the refit loops cheap


@pytest.fixture(scope="module")
def radon_design():
    ds = synth_dataset("radon_like", {"g": 12}, seed=0)
    spec = ModelSpec("y", (intercept(), column("floor")),
                     (intercept(), column("floor")), "group")
    return build_design(spec, ds)


@pytest.fixture(scope="module")
def longit_design():
    ds = synth_dataset("longitudinal_like", {"g": 14, "dropout": 0.05}, seed=0)
    spec = ModelSpec("y", (intercept(), column("week")),
                     (intercept(), column("week")), "group")
    return build_design(spec, ds)


class TestRecipes:
    def test_random_slope_lineup(self, longit_design):
        r = random_slope_lineup(longit_design, slope_term=1, m=M, seed=3)
        assert r.lineup.kind == "fanned_lines"
        assert len(r.lineup.panels) == M
        assert 1 <= reveal(r.lineup, confirm=True) <= M

    def test_qq_lineup_plain_and_contaminated(self, radon_design):
        plain = qq_lineup(radon_design, component=0, m=M, seed=4)
        heavy = qq_lineup(radon_design, component=0, m=M, seed=4,
                          contaminate_nu=3.0)
        assert plain.lineup.kind == heavy.lineup.kind == "qq"
        # same nulls, different data panel
        a_ans = reveal(plain.lineup, confirm=True)
        b_ans = reveal(heavy.lineup, confirm=True)
        assert a_ans == b_ans  # position comes from the same seed
        pa = plain.lineup.panels[a_ans - 1].series[-1]
        pb = heavy.lineup.panels[b_ans - 1].series[-1]
        assert not np.array_equal(pa.y, pb.y)

    def test_cyclone_lineup(self, radon_design):
        r = homogeneity_cyclone_lineup(radon_design, m=M, seed=5)
        assert r.lineup.kind == "cyclone"

    def test_dotplot_lineup(self, longit_design):
        r = homogeneity_dotplot_lineup(longit_design, m=M, seed=6)
        assert r.lineup.kind == "dotplot"

    def test_covariate_residual_lineup(self, longit_design):
        xg = [gr.Z[:, 1] for gr in longit_design.groups]
        r = covariate_residual_lineup(longit_design, xg, m=M, seed=7)
        assert r.lineup.kind == "scatter_smooth"

    def test_re_correlation_lineup(self, radon_design):
        r = re_correlation_lineup(radon_design, m=M, seed=8)
        assert r.lineup.kind == "re_scatter"

    def test_fixed_effect_box_lineup(self):
        # candidate covariate: a three-level factor shifting the mean
        rng = np.random.default_rng(9)
        ds = synth_dataset("balanced_oneway", {"g": 10, "n": 9}, seed=9)
        levels = np.array([("lo", "mid", "hi")[i % 3]
                           for i in range(ds.n_rows)])
        y = ds.numeric("y") + np.where(levels == "hi", 1.5, 0.0)
        from lmelineup.data import Dataset

        ds2 = Dataset({"y": y, "grade": levels,
                       "group": ds.categorical("group")}, n_rows=ds.n_rows)
        spec = ModelSpec("y", (intercept(),), (intercept(),), "group")
        design = build_design(spec, ds2)
        cov_groups = [levels[ds.categorical("group") == gr.label]
                      for gr in design.groups]
        r = fixed_effect_lineup(design, cov_groups, categorical=True, m=M, seed=10)
        assert r.lineup.kind == "boxplots"

    def test_same_seed_renders_identically(self, radon_design):
        a = homogeneity_cyclone_lineup(radon_design, m=M, seed=11)
        b = homogeneity_cyclone_lineup(radon_design, m=M, seed=11)
        assert render_svg(a.lineup) == render_svg(b.lineup)


class TestObservers:
    def test_scores_exist_for_all_kinds(self, radon_design, longit_design):
        built = [
            random_slope_lineup(longit_design, 1, m=M, seed=1).lineup,
            qq_lineup(radon_design, 0, m=M, seed=1).lineup,
            homogeneity_cyclone_lineup(radon_design, m=M, seed=1).lineup,
            re_correlation_lineup(radon_design, m=M, seed=1).lineup,
        ]
        for lu in built:
            scores = [panel_score(p) for p in lu.panels]
            assert all(np.isfinite(s) for s in scores)
            assert 1 <= pick_most_discrepant(lu) <= M

    def test_unknown_kind_rejected(self):
        from lmelineup.panels import PanelData, PointsSeries

        panel = PanelData(kind="mystery",
                          series=(PointsSeries(np.arange(3.0), np.arange(3.0)),))
        with pytest.raises(ValueError, match="no scorer"):
            panel_score(panel)

    def test_accuracy_pick_extremes(self):
        rng = np.random.default_rng(12)
        assert all(accuracy_pick(rng, 20, 7, 1.0) == 7 for _ in range(50))
        misses = [accuracy_pick(rng, 20, 7, 0.0) for _ in range(200)]
        assert 7 not in misses
        assert set(misses) <= set(range(1, 21))

    def test_accuracy_rate_close_to_target(self):
        rng = np.random.default_rng(13)
        picks = [accuracy_pick(rng, 20, 3, 0.5) for _ in range(4000)]
        rate = np.mean([p == 3 for p in picks])
        assert rate == pytest.approx(0.5 + 0.5 / 19, abs=0.04)
