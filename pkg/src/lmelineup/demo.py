"""Ready-made synthetic studies for demos and end-to-end tests.

Each supported design builds replicate lineups of one synthetic data
source: ``qq`` plants heavy-tailed random effects behind a quantile
lineup, ``cyclone`` plants between-group heteroscedasticity behind an
IQR-ordered box lineup, ``fanned`` and ``re_scatter`` are null-consistent
controls.
"""

from __future__ import annotations

from .data import ModelSpec, build_design, column, intercept, synth_dataset
from .protocol import (homogeneity_cyclone_lineup, qq_lineup, random_slope_lineup,
                       re_correlation_lineup)
from .study import DesignEntry, StudyConfig, StudyStore, assets_from_lineups

__all__ = ["build_demo_study", "DEMO_DESIGNS"]

DEMO_DESIGNS = ("qq", "cyclone", "fanned", "re_scatter")


def _radon_design(seed: int, hetero: bool = False, strong_re: bool = False, g: int = 40):
    params = {"g": g}
    if hetero:
        params.update(sigma_spread=3.0, size_log_mean=2.0)
    if strong_re:
        params["D"] = ((1.2, 0.05), (0.05, 0.3))
    data = synth_dataset("radon_like", params, seed=seed)
    spec = ModelSpec(response="y",
                     fixed_terms=(intercept(), column("floor")),
                     random_terms=(intercept(), column("floor")),
                     group_factor="group")
    return build_design(spec, data)


def _longitudinal_design(seed: int, random_slope: bool = True, g: int = 50):
    params = {"g": g, "dropout": 0.05}
    if not random_slope:
        params["D"] = ((0.8, 0.0), (0.0, 0.0))
    data = synth_dataset("longitudinal_like", params, seed=seed)
    spec = ModelSpec(response="y",
                     fixed_terms=(intercept(), column("week")),
                     random_terms=(intercept(), column("week")),
                     group_factor="group")
    return build_design(spec, data)


def _build_one(design_kind: str, replicate: int, seed: int, m: int, n_jobs: int):
    rep_id = f"r{replicate + 1}"
    rep_seed = seed * 1009 + replicate
    if design_kind == "qq":
        design = _radon_design(seed, strong_re=True)
        return qq_lineup(design, component=0, m=m, seed=rep_seed,
                         contaminate_nu=3.0, n_jobs=n_jobs, replicate_id=rep_id).lineup
    if design_kind == "cyclone":
        design = _radon_design(seed, hetero=True)
        return homogeneity_cyclone_lineup(design, m=m, seed=rep_seed, n_jobs=n_jobs,
                                          replicate_id=rep_id).lineup
    if design_kind == "fanned":
        design = _longitudinal_design(seed, random_slope=False)
        return random_slope_lineup(design, slope_term=1, m=m, seed=rep_seed,
                                   n_jobs=n_jobs, replicate_id=rep_id).lineup
    if design_kind == "re_scatter":
        design = _radon_design(seed)
        return re_correlation_lineup(design, m=m, seed=rep_seed, n_jobs=n_jobs,
                                     replicate_id=rep_id).lineup
    raise ValueError(f"unknown demo design {design_kind!r}; pick from {DEMO_DESIGNS}")


def build_demo_study(data_dir, study_id: str, designs=("qq", "cyclone"),
                     replicates: int = 2, seed: int = 0, m: int = 20,
                     session_cap: int = 10, n_jobs: int = 1) -> dict:
    """Generate lineups for the requested designs and persist them as a
    study. The seed fixes the synthetic data, the bootstrap, and the sealed
    answer positions; replicate lineups of one design share their data
    source, differing only in null sets."""
    entries = []
    for kind in designs:
        lineups = [_build_one(kind, r, seed, m, n_jobs) for r in range(replicates)]
        assets = assets_from_lineups(kind, f"{kind}-src", lineups)
        entries.append(DesignEntry(kind=kind, source_id=f"{kind}-src",
                                   assets=tuple(assets)))
    store = StudyStore(data_dir)
    return store.create_study(StudyConfig(
        study_id=study_id, designs=tuple(entries),
        session_cap=session_cap, serve_seed=seed))
