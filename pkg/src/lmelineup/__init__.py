"""Lineup-based visual diagnostics and model selection for two-level
linear mixed-effects models: fitting, parametric bootstrap, lineup
rendering, observer studies, and visual p-values."""

from .bootstrap import (BootstrapConfig, BootstrapDistribution, BootstrapReplicate,
                        NullModelKind, bootstrap_refit, bootstrap_statistic,
                        simulate_contaminated, simulate_response)
from .data import (Dataset, DataError, GroupedDesign, ModelSpec, Term, build_design,
                   column, drop_fixed_term, drop_random_term, intercept, load_csv,
                   parse_spec_config, poly, synth_dataset)
from .diagnostics import (ADTestResult, HTestResult, anderson_darling, chisq_cdf,
                          chisq_sf, group_dispersion, h_test, re_correlation)
from .fit import (CollinearityError, CovarianceSpec, FitError, FitOptions, FittedLME,
                  ResidualSet, blup, fit, fitted_from_json, fitted_to_json,
                  full_deviance, gls_beta, marginal_cov, residuals)
from .lineup import Lineup, build_lineup, lineup_metadata, reveal
from .panels import (PanelData, panel_boxplots, panel_dotplot, panel_fanned_lines,
                     panel_qq, panel_re_scatter, panel_scatter_smooth)
from .pvalue import (EvaluationSet, Pick, VisualPValue, binomial_pvalue,
                     combined_pvalue, reason_breakdown, visual_pvalue_mc)
from .svg import RenderOptions, render_svg

__version__ = "0.1.0"
