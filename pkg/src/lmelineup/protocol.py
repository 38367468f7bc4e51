"""End-to-end lineup recipes.

Each recipe follows the same four-step pattern: fit a model, simulate
responses from the appropriate null model by parametric bootstrap, reduce
observed and simulated data to panels of one design, and hide the observed
panel among the nulls. The returned lineup keeps its answer sealed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .bootstrap import (BootstrapConfig, BootstrapReplicate, NullModelKind,
                        bootstrap_refit, simulate_contaminated)
from .data import GroupedDesign
from .fit import FitOptions, FittedLME, fit, residuals
from .lineup import Lineup, build_lineup
from .panels import (PanelData, panel_boxplots, panel_dotplot, panel_fanned_lines,
                     panel_qq, panel_re_scatter, panel_scatter_smooth)

__all__ = [
    "ProtocolError",
    "ProtocolResult",
    "random_slope_lineup",
    "fixed_effect_lineup",
    "re_correlation_lineup",
    "homogeneity_cyclone_lineup",
    "homogeneity_dotplot_lineup",
    "covariate_residual_lineup",
    "qq_lineup",
]

_DATA_PANEL_STREAM = 0x51EA7


class ProtocolError(RuntimeError):
    pass


@dataclass(frozen=True)
class ProtocolResult:
    lineup: Lineup
    fitted: FittedLME


def _null_replicates(fitted: FittedLME, design: GroupedDesign, nullkind: NullModelKind,
                     m: int, seed: int, refit: bool, n_jobs: int,
                     opts: FitOptions | None) -> list[BootstrapReplicate]:
    cfg = BootstrapConfig(B=m - 1, seed=seed, refit=refit, n_jobs=n_jobs)
    reps = bootstrap_refit(fitted, design, nullkind, cfg, opts=opts)
    if refit and any(r.residuals is None for r in reps):
        raise ProtocolError("a bootstrap refit failed outright; cannot build panels")
    return reps


def _slope_column(design: GroupedDesign, slope_term: int) -> int:
    lo, hi = design.random_slices[slope_term]
    if hi - lo != 1:
        raise ProtocolError("slope term must map to a single column")
    return lo


def random_slope_lineup(design: GroupedDesign, slope_term: int, m: int = 20,
                        seed: int = 0, method: str = "REML", n_jobs: int = 1,
                        opts: FitOptions | None = None,
                        replicate_id: str = "r1") -> ProtocolResult:
    """Is the random slope needed? Panels show one least-squares line per
    group of response against the slope covariate; nulls are simulated from
    the model with that random term removed."""
    fitted = fit(design, method=method, opts=opts)
    col = _slope_column(design, slope_term)

    def to_panel(d: GroupedDesign) -> PanelData:
        return panel_fanned_lines([(gr.Z[:, col], gr.y) for gr in d.groups])

    reps = _null_replicates(fitted, design, NullModelKind.drop_random(slope_term),
                            m, seed, refit=False, n_jobs=n_jobs, opts=opts)
    nulls = [to_panel(design.with_responses(r.responses())) for r in reps]
    lineup = build_lineup(to_panel(design), nulls, seed=seed, m=m, replicate_id=replicate_id)
    return ProtocolResult(lineup=lineup, fitted=fitted)


def fixed_effect_lineup(reduced_design: GroupedDesign,
                        covariate_groups: Sequence[np.ndarray],
                        categorical: bool, m: int = 20, seed: int = 0,
                        method: str = "REML", min_group: int = 5, n_jobs: int = 1,
                        opts: FitOptions | None = None,
                        replicate_id: str = "r1") -> ProtocolResult:
    """Does a candidate covariate explain remaining level-1 structure?

    Fit the model WITHOUT the candidate; plot its conditional residuals
    against the candidate's values (box plots for a discrete candidate,
    scatter plus smoother for a continuous one). Nulls re-fit the same
    model to its own parametric bootstrap."""
    if len(covariate_groups) != reduced_design.g:
        raise ProtocolError("covariate groups do not match design groups")
    fitted = fit(reduced_design, method=method, opts=opts)
    cov_pooled = np.concatenate([np.asarray(c) for c in covariate_groups])

    def to_panel(res) -> PanelData:
        values = res.level1_pooled()
        if categorical:
            return panel_boxplots(values, cov_pooled, order="as_is", min_group=min_group)
        return panel_scatter_smooth(cov_pooled.astype(float), values)

    reps = _null_replicates(fitted, reduced_design, NullModelKind.same_model(),
                            m, seed, refit=True, n_jobs=n_jobs, opts=opts)
    nulls = [to_panel(r.residuals) for r in reps]
    data_panel = to_panel(residuals(reduced_design, fitted))
    lineup = build_lineup(data_panel, nulls, seed=seed, m=m, replicate_id=replicate_id)
    return ProtocolResult(lineup=lineup, fitted=fitted)


def re_correlation_lineup(design: GroupedDesign, m: int = 20, seed: int = 0,
                          method: str = "REML", n_jobs: int = 1,
                          opts: FitOptions | None = None,
                          replicate_id: str = "r1") -> ProtocolResult:
    """Do the random effects need a correlation parameter? Panels scatter
    the predicted random effects with a regression line; nulls simulate
    from the model refit with a diagonal random-effect covariance, then
    refit the correlated model, so shrinkage-induced slope survives in the
    null panels."""
    fitted = fit(design, method=method, opts=opts)

    reps = _null_replicates(fitted, design, NullModelKind.uncorrelated(),
                            m, seed, refit=True, n_jobs=n_jobs, opts=opts)
    nulls = [panel_re_scatter(r.residuals) for r in reps]
    data_panel = panel_re_scatter(residuals(design, fitted))
    lineup = build_lineup(data_panel, nulls, seed=seed, m=m, replicate_id=replicate_id)
    return ProtocolResult(lineup=lineup, fitted=fitted)


def homogeneity_cyclone_lineup(design: GroupedDesign, m: int = 20, seed: int = 0,
                               method: str = "REML", min_group: int = 5,
                               n_jobs: int = 1, opts: FitOptions | None = None,
                               replicate_id: str = "r1") -> ProtocolResult:
    """Is the level-1 spread constant across groups? Panels are horizontal
    box plots of conditional residuals by group, ordered by interquartile
    range; groups below ``min_group`` rows are left out of the boxes."""
    fitted = fit(design, method=method, opts=opts)
    labels = np.concatenate([[gr.label] * len(gr.y) for gr in design.groups])

    def to_panel(res) -> PanelData:
        return panel_boxplots(res.level1_pooled(), labels, order="by_iqr",
                              min_group=min_group, orient="h")

    reps = _null_replicates(fitted, design, NullModelKind.same_model(),
                            m, seed, refit=True, n_jobs=n_jobs, opts=opts)
    nulls = [to_panel(r.residuals) for r in reps]
    data_panel = to_panel(residuals(design, fitted))
    lineup = build_lineup(data_panel, nulls, seed=seed, m=m, replicate_id=replicate_id)
    return ProtocolResult(lineup=lineup, fitted=fitted)


def homogeneity_dotplot_lineup(design: GroupedDesign, m: int = 20, seed: int = 0,
                               method: str = "REML", n_jobs: int = 1,
                               opts: FitOptions | None = None,
                               replicate_id: str = "r1") -> ProtocolResult:
    """Jittered-dots variant of the between-group spread check."""
    fitted = fit(design, method=method, opts=opts)
    labels = np.concatenate([[gr.label] * len(gr.y) for gr in design.groups])

    def to_panel(res) -> PanelData:
        return panel_dotplot(res.level1_pooled(), labels)

    reps = _null_replicates(fitted, design, NullModelKind.same_model(),
                            m, seed, refit=True, n_jobs=n_jobs, opts=opts)
    nulls = [to_panel(r.residuals) for r in reps]
    data_panel = to_panel(residuals(design, fitted))
    lineup = build_lineup(data_panel, nulls, seed=seed, m=m, replicate_id=replicate_id)
    return ProtocolResult(lineup=lineup, fitted=fitted)


def covariate_residual_lineup(design: GroupedDesign,
                              covariate_groups: Sequence[np.ndarray],
                              m: int = 20, seed: int = 0, method: str = "REML",
                              n_jobs: int = 1, opts: FitOptions | None = None,
                              replicate_id: str = "r1") -> ProtocolResult:
    """Conditional residuals against a model covariate, with a smoother.
    One display, two uses: a trend in the data panel indicates a missing
    mean-structure term; a spread change indicates heteroscedasticity."""
    if len(covariate_groups) != design.g:
        raise ProtocolError("covariate groups do not match design groups")
    fitted = fit(design, method=method, opts=opts)
    x = np.concatenate([np.asarray(c, dtype=float) for c in covariate_groups])

    def to_panel(res) -> PanelData:
        return panel_scatter_smooth(x, res.level1_pooled())

    reps = _null_replicates(fitted, design, NullModelKind.same_model(),
                            m, seed, refit=True, n_jobs=n_jobs, opts=opts)
    nulls = [to_panel(r.residuals) for r in reps]
    data_panel = to_panel(residuals(design, fitted))
    lineup = build_lineup(data_panel, nulls, seed=seed, m=m, replicate_id=replicate_id)
    return ProtocolResult(lineup=lineup, fitted=fitted)


def qq_lineup(design: GroupedDesign, component: int = 0, m: int = 20, seed: int = 0,
              method: str = "REML", band_level: float = 0.95,
              contaminate_nu: float | None = None, n_jobs: int = 1,
              opts: FitOptions | None = None,
              replicate_id: str = "r1") -> ProtocolResult:
    """Distributional check of one predicted random-effect component via
    normal quantile panels with bands.

    With ``contaminate_nu`` set, the data panel comes from responses
    re-simulated with heavy-tailed (multivariate t) random effects and
    refit: a planted violation for power studies. Null panels always show
    refits of normal-theory bootstrap responses, so every panel carries the
    same shrinkage artifacts.
    """
    fitted = fit(design, method=method, opts=opts)
    if not 0 <= component < design.q:
        raise ProtocolError(f"component {component} outside 0..{design.q - 1}")

    def to_panel(res) -> PanelData:
        return panel_qq(res.level2_matrix()[:, component], band_level=band_level)

    reps = _null_replicates(fitted, design, NullModelKind.same_model(),
                            m, seed, refit=True, n_jobs=n_jobs, opts=opts)
    nulls = [to_panel(r.residuals) for r in reps]

    if contaminate_nu is None:
        data_res = residuals(design, fitted)
    else:
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=seed, spawn_key=(_DATA_PANEL_STREAM,)))
        ystar = simulate_contaminated(fitted, design, contaminate_nu, rng)
        contaminated = design.with_responses(ystar)
        refit = fit(contaminated, method=method, opts=opts)
        data_res = residuals(contaminated, refit)
    lineup = build_lineup(to_panel(data_res), nulls, seed=seed, m=m,
                          replicate_id=replicate_id)
    return ProtocolResult(lineup=lineup, fitted=fitted)
