"""Conventional numeric diagnostics: a between-group heteroscedasticity test
built on standardized log dispersions, an Anderson-Darling normality check,
random-effect correlation summaries, and chi-square tail utilities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special

from .bootstrap import BootstrapConfig, bootstrap_statistic
from .data import GroupedDesign
from .fit import FittedLME, ResidualSet

__all__ = [
    "GroupDispersion",
    "HTestResult",
    "ADTestResult",
    "RECorrelation",
    "DiagnosticsError",
    "chisq_sf",
    "chisq_cdf",
    "group_dispersion",
    "h_test",
    "anderson_darling",
    "re_correlation",
]

DEFAULT_MIN_GROUP_SIZE = 10


class DiagnosticsError(ValueError):
    pass


def chisq_sf(x: float, df: int) -> float:
    """P(chi2_df >= x), by the regularized upper incomplete gamma."""
    if df <= 0:
        raise DiagnosticsError("df must be positive")
    if x < 0:
        raise DiagnosticsError("x must be nonnegative")
    return float(special.gammaincc(df / 2.0, x / 2.0))


def chisq_cdf(x: float, df: int) -> float:
    if df <= 0:
        raise DiagnosticsError("df must be positive")
    if x < 0:
        raise DiagnosticsError("x must be nonnegative")
    return float(special.gammainc(df / 2.0, x / 2.0))


# ---------------------------------------------------------------------------
# Heteroscedasticity across groups


@dataclass(frozen=True)
class GroupDispersion:
    label: str
    n: int
    rank: int
    s2: float
    d: float


@dataclass(frozen=True)
class HTestResult:
    min_group_size: int
    g_star: int
    per_group: tuple[GroupDispersion, ...]
    H: float
    df: int
    p_naive: float
    p_bootstrap: float | None = None
    B: int | None = None
    excluded_zero_variance: tuple[str, ...] = ()

    def table_row(self) -> dict:
        return {
            "min_group_size": self.min_group_size,
            "H": self.H,
            "df": self.df,
            "p_naive": self.p_naive,
            "p_bootstrap": self.p_bootstrap,
        }


def _group_ols_variance(gr_y: np.ndarray, gr_X: np.ndarray) -> tuple[float, int]:
    """Residual variance of a separate per-group least squares fit.

    The group regression always contains an intercept; fixed-effect columns
    that do not vary within the group are dropped (they are absorbed by the
    intercept), and the returned rank reflects the reduced matrix.
    """
    n = len(gr_y)
    cols = [np.ones(n)]
    for j in range(gr_X.shape[1]):
        col = gr_X[:, j]
        if np.ptp(col) > 1e-12 * max(1.0, np.max(np.abs(col))):
            cols.append(col)
    if len(cols) == 1:
        # intercept-only reduction: plain centered sum of squares
        if n <= 1:
            return float("nan"), 1
        dev = gr_y - gr_y.mean()
        return float(dev @ dev) / (n - 1), 1
    M = np.column_stack(cols)
    coef, rss, rank, _ = np.linalg.lstsq(M, gr_y, rcond=None)
    rank = int(rank)
    if rss.size == 0:
        resid = gr_y - M @ coef
        rss_val = float(resid @ resid)
    else:
        rss_val = float(rss[0])
    if n - rank <= 0:
        return float("nan"), rank
    return rss_val / (n - rank), rank


def group_dispersion(design: GroupedDesign, min_size: int = DEFAULT_MIN_GROUP_SIZE
                     ) -> tuple[list[GroupDispersion], list[str]]:
    """Standardized log-dispersion d_i per eligible group.

    d_i = (log s_i^2 - wmean(log s^2)) / sqrt(2 / (n_i - r_i)) with weights
    n_i - r_i, where s_i^2 comes from a separate per-group least squares
    fit of rank r_i. Groups below ``min_size``, groups with no residual
    degrees of freedom, and exact-fit groups (s_i^2 = 0) are excluded; the
    latter are reported back by label.
    """
    stats = []
    excluded_zero = []
    for gr in design.groups:
        n = len(gr.y)
        if n < min_size:
            continue
        s2, rank = _group_ols_variance(gr.y, gr.X)
        if not np.isfinite(s2):
            continue
        # an exact fit leaves only rounding residue; log s^2 would explode
        exact_fit_floor = (1e-10 * max(1.0, float(np.max(np.abs(gr.y))))) ** 2
        if s2 <= exact_fit_floor:
            excluded_zero.append(gr.label)
            continue
        stats.append((gr.label, n, rank, s2))
    if len(stats) < 2:
        raise DiagnosticsError(
            f"need at least 2 eligible groups (min size {min_size}); found {len(stats)}")
    weights = np.array([n - r for _, n, r, _ in stats], dtype=float)
    logs2 = np.array([math.log(s2) for _, _, _, s2 in stats])
    wmean = float(weights @ logs2 / weights.sum())
    out = []
    for (label, n, rank, s2), w in zip(stats, weights):
        d = (math.log(s2) - wmean) / math.sqrt(2.0 / w)
        out.append(GroupDispersion(label=label, n=n, rank=rank, s2=s2, d=d))
    return out, excluded_zero


def h_test(design: GroupedDesign, min_size: int = DEFAULT_MIN_GROUP_SIZE, *,
           fitted: FittedLME | None = None, B: int | None = None,
           seed: int | None = None, n_jobs: int = 1) -> HTestResult:
    """H = sum of d_i^2 over eligible groups against chi2_{g*-1}; when a
    fitted model and B are supplied, a parametric-bootstrap reference
    distribution of H (same group-size filter) is used as well."""
    per_group, excluded = group_dispersion(design, min_size)
    H = float(sum(gd.d ** 2 for gd in per_group))
    g_star = len(per_group)
    df = g_star - 1
    result = HTestResult(
        min_group_size=min_size,
        g_star=g_star,
        per_group=tuple(per_group),
        H=H,
        df=df,
        p_naive=chisq_sf(H, df),
        excluded_zero_variance=tuple(excluded),
    )
    if fitted is None:
        return result
    if B is None or seed is None:
        raise DiagnosticsError("bootstrap mode needs both B and seed")

    def stat(d: GroupedDesign, _f: FittedLME) -> float:
        gd, _ = group_dispersion(d, min_size)
        return float(sum(x.d ** 2 for x in gd))

    cfg = BootstrapConfig(B=B, seed=seed, refit=False, n_jobs=n_jobs)
    dist = bootstrap_statistic(fitted, design, stat, cfg)
    return HTestResult(
        min_group_size=min_size,
        g_star=g_star,
        per_group=tuple(per_group),
        H=H,
        df=df,
        p_naive=result.p_naive,
        p_bootstrap=dist.p_upper,
        B=B,
        excluded_zero_variance=tuple(excluded),
    )


# ---------------------------------------------------------------------------
# Anderson-Darling normality (estimated mean and variance)


@dataclass(frozen=True)
class ADTestResult:
    A2: float
    p: float
    n: int


def anderson_darling(sample: Sequence[float]) -> ADTestResult:
    """Composite-normality Anderson-Darling test with the small-sample
    correction A2* = A2 (1 + 0.75/n + 2.25/n^2) and the standard piecewise
    tail approximation for the case of estimated mean and variance."""
    x = np.asarray(sample, dtype=float)
    n = len(x)
    if n < 8:
        raise DiagnosticsError("need at least 8 observations")
    sd = x.std(ddof=1)
    if sd == 0.0:
        raise DiagnosticsError("sample is constant")
    z = np.sort((x - x.mean()) / sd)
    cdf = special.ndtr(z)
    eps = np.finfo(float).tiny
    cdf = np.clip(cdf, eps, 1.0 - 1e-16)
    i = np.arange(1, n + 1)
    A2 = -n - float(np.mean((2 * i - 1) * (np.log(cdf) + np.log1p(-cdf[::-1]))))
    a = A2 * (1.0 + 0.75 / n + 2.25 / n ** 2)
    if a >= 0.6:
        p = math.exp(1.2937 - 5.709 * a + 0.0186 * a * a)
    elif a > 0.34:
        p = math.exp(0.9177 - 4.279 * a - 1.38 * a * a)
    elif a > 0.2:
        p = 1.0 - math.exp(-8.318 + 42.796 * a - 59.938 * a * a)
    else:
        p = 1.0 - math.exp(-13.436 + 101.14 * a - 223.73 * a * a)
    p = min(max(p, np.finfo(float).tiny), 1.0 - 1e-12)
    return ADTestResult(A2=float(A2), p=float(p), n=n)


# ---------------------------------------------------------------------------
# Random-effect correlation


@dataclass(frozen=True)
class RECorrelation:
    matrix: np.ndarray   # (q, q) sample correlations of the predicted effects
    slope: float         # simple-regression slope of component 2 on component 1


def re_correlation(residset: ResidualSet) -> RECorrelation:
    """Sample correlation of the predicted random effects across groups plus
    the regression slope of the second component on the first. Shrinkage
    leaks into these summaries; they describe the predictions as-is."""
    b = residset.level2_matrix()
    g, q = b.shape
    if q < 2:
        raise DiagnosticsError("need at least two random-effect components")
    if g < 3:
        raise DiagnosticsError("need at least three groups")
    sds = b.std(axis=0, ddof=1)
    if np.any(sds == 0.0):
        raise DiagnosticsError("degenerate predicted random effects")
    corr = np.corrcoef(b, rowvar=False)
    cov01 = float(np.cov(b[:, 0], b[:, 1], ddof=1)[0, 1])
    slope = cov01 / float(sds[0] ** 2)
    return RECorrelation(matrix=corr, slope=slope)
