"""Parametric bootstrap of a fitted two-level model.

Responses are simulated from a null model (the fitted model itself, or a
structurally reduced variant of it), the full proposed model is refit to
every simulated response set, and the refit residuals are extracted. A
heavy-tailed variant draws the random effects from a multivariate t to
plant detectable distributional violations.

Replicate b always consumes the random stream derived from
(seed, replicate=b, attempt), so results are independent of execution
order and of serial vs parallel scheduling.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .data import GroupedDesign
from .fit import FitError, FitOptions, FittedLME, ResidualSet, fit, residuals

__all__ = [
    "BootstrapConfig",
    "NullModelKind",
    "BootstrapReplicate",
    "BootstrapDistribution",
    "simulate_response",
    "simulate_contaminated",
    "bootstrap_refit",
    "bootstrap_statistic",
]

_REPLICATE_STREAM = 0x9E3779B9  # namespace tag for replicate-derived seeds


@dataclass(frozen=True)
class BootstrapConfig:
    B: int
    seed: int
    re_dist: str | tuple = "normal"   # "normal" or ("t", nu) with nu > 2
    refit: bool = True
    n_jobs: int = 1

    def __post_init__(self):
        if self.B < 1:
            raise ValueError("B must be >= 1")
        nu = self.t_dof()
        if nu is not None and not nu > 2:
            raise ValueError("t distribution needs nu > 2")

    def t_dof(self) -> float | None:
        if self.re_dist == "normal":
            return None
        if isinstance(self.re_dist, tuple) and len(self.re_dist) == 2 and self.re_dist[0] == "t":
            return float(self.re_dist[1])
        raise ValueError(f"unknown random-effect distribution {self.re_dist!r}")


@dataclass(frozen=True)
class NullModelKind:
    """Which model the null responses are simulated from: the proposed model
    itself, the model with one fixed or random term removed, or the model
    refit with uncorrelated random effects."""

    variant: str
    index: int | None = None

    @classmethod
    def same_model(cls) -> "NullModelKind":
        return cls("same_model")

    @classmethod
    def drop_fixed(cls, c: int) -> "NullModelKind":
        return cls("drop_fixed", c)

    @classmethod
    def drop_random(cls, j: int) -> "NullModelKind":
        return cls("drop_random", j)

    @classmethod
    def uncorrelated(cls) -> "NullModelKind":
        return cls("uncorrelated_re")

    def __post_init__(self):
        if self.variant not in ("same_model", "drop_fixed", "drop_random", "uncorrelated_re"):
            raise ValueError(f"unknown null-model variant {self.variant!r}")
        if self.variant in ("drop_fixed", "drop_random") and self.index is None:
            raise ValueError(f"{self.variant} needs a term index")


@dataclass(frozen=True)
class BootstrapReplicate:
    index: int
    design: GroupedDesign          # null design carrying the simulated responses
    fitted: FittedLME | None      # refit of the full proposed model (if refit)
    residuals: ResidualSet | None
    converged: bool
    resimulated: bool

    def responses(self) -> list[np.ndarray]:
        return self.design.responses()


def _replicate_rng(seed: int, index: int, attempt: int = 0) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(_REPLICATE_STREAM, index, attempt))
    )


def simulate_response(fitted: FittedLME, design: GroupedDesign,
                      rng: np.random.Generator) -> list[np.ndarray]:
    """Draw y*_i = X_i beta + Z_i b*_i + eps*_i with b* ~ N(0, D) and
    eps* ~ N(0, sigma2 I)."""
    D, sigma2 = fitted.cov.D, fitted.cov.sigma2
    q = D.shape[0]
    chol = _psd_factor(D)
    sd = np.sqrt(sigma2)
    out = []
    for gr in design.groups:
        b = chol @ rng.standard_normal(q)
        eps = sd * rng.standard_normal(len(gr.y))
        out.append(gr.X @ fitted.beta + gr.Z @ b + eps)
    return out


def simulate_contaminated(fitted: FittedLME, design: GroupedDesign, nu: float,
                          rng: np.random.Generator) -> list[np.ndarray]:
    """Like ``simulate_response`` but the random effects come from a
    multivariate t with ``nu`` degrees of freedom and scale matrix D (one
    chi-square divisor per group vector), so their covariance is
    nu/(nu-2) * D. Errors stay normal."""
    if not nu > 2:
        raise ValueError("nu must exceed 2")
    D, sigma2 = fitted.cov.D, fitted.cov.sigma2
    q = D.shape[0]
    chol = _psd_factor(D)
    sd = np.sqrt(sigma2)
    out = []
    for gr in design.groups:
        z = chol @ rng.standard_normal(q)
        w = rng.chisquare(nu) / nu
        b = z / np.sqrt(w)
        eps = sd * rng.standard_normal(len(gr.y))
        out.append(gr.X @ fitted.beta + gr.Z @ b + eps)
    return out


def _psd_factor(D: np.ndarray) -> np.ndarray:
    # Cholesky-like factor tolerating boundary (singular) D
    w, V = np.linalg.eigh(D)
    return V * np.sqrt(np.maximum(w, 0.0))


def _null_model(fitted: FittedLME, design: GroupedDesign, nullkind: NullModelKind,
                opts: FitOptions | None) -> tuple[FittedLME, GroupedDesign]:
    """The model the null responses are simulated from, refit to the observed
    data whenever its structure differs from the proposed model."""
    if nullkind.variant == "same_model":
        return fitted, design
    if nullkind.variant == "drop_fixed":
        reduced = design.drop_fixed(nullkind.index)
    elif nullkind.variant == "drop_random":
        reduced = design.drop_random(nullkind.index)
    else:  # uncorrelated_re
        reduced = design
    diagonal = nullkind.variant == "uncorrelated_re"
    null_fit = fit(reduced, method=fitted.method, opts=opts, diagonal_re=diagonal)
    return null_fit, reduced


def _draw(null_fit: FittedLME, null_design: GroupedDesign, cfg: BootstrapConfig,
          rng: np.random.Generator) -> list[np.ndarray]:
    nu = cfg.t_dof()
    if nu is None:
        return simulate_response(null_fit, null_design, rng)
    return simulate_contaminated(null_fit, null_design, nu, rng)


def bootstrap_refit(fitted: FittedLME, design: GroupedDesign, nullkind: NullModelKind,
                    cfg: BootstrapConfig, opts: FitOptions | None = None
                    ) -> list[BootstrapReplicate]:
    """B replicates: simulate responses under the null model, refit the full
    proposed model, extract its residuals. A non-convergent refit is
    resimulated once from a fresh stream; if it still fails to converge the
    replicate is kept and flagged."""
    null_fit, null_design = _null_model(fitted, design, nullkind, opts)

    def one(b: int) -> BootstrapReplicate:
        resimulated = False
        for attempt in (0, 1):
            rng = _replicate_rng(cfg.seed, b, attempt)
            ystar = _draw(null_fit, null_design, cfg, rng)
            sim_design = null_design.with_responses(ystar)
            if not cfg.refit:
                return BootstrapReplicate(b, sim_design, None, None, True, resimulated)
            full_design = design.with_responses(ystar)
            try:
                refit = fit(full_design, method=fitted.method, opts=opts,
                            diagonal_re=fitted.diagonal_re)
            except FitError:
                refit = None
            if refit is not None and refit.converged:
                return BootstrapReplicate(b, sim_design, refit,
                                          residuals(full_design, refit), True, resimulated)
            resimulated = True
        # keep the last attempt, flagged
        if refit is None:
            return BootstrapReplicate(b, sim_design, None, None, False, True)
        return BootstrapReplicate(b, sim_design, refit,
                                  residuals(full_design, refit), False, True)

    if cfg.n_jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.n_jobs) as pool:
            reps = list(pool.map(one, range(cfg.B)))
    else:
        reps = [one(b) for b in range(cfg.B)]
    reps.sort(key=lambda r: r.index)
    return reps


@dataclass(frozen=True)
class BootstrapDistribution:
    observed: float
    values: np.ndarray
    converged: np.ndarray     # bool per replicate; failures excluded from tails

    @property
    def B(self) -> int:
        return len(self.values)

    @property
    def p_upper(self) -> float:
        """(1 + #{converged stat* >= observed}) / (#converged + 1)."""
        vals = self.values[self.converged]
        return float((1 + np.sum(vals >= self.observed)) / (len(vals) + 1))

    def to_ndjson(self, seed: int) -> str:
        lines = []
        for b, (v, ok) in enumerate(zip(self.values, self.converged)):
            lines.append(json.dumps({
                "replicate": b,
                "seed": [seed, b],
                "converged": bool(ok),
                "statistic": None if np.isnan(v) else float(v),
            }))
        return "\n".join(lines) + "\n"


def bootstrap_statistic(fitted: FittedLME, design: GroupedDesign,
                        stat: Callable[[GroupedDesign, FittedLME], float],
                        cfg: BootstrapConfig,
                        nullkind: NullModelKind | None = None,
                        opts: FitOptions | None = None) -> BootstrapDistribution:
    """Empirical null distribution of ``stat`` under the parametric bootstrap.

    ``stat`` receives the design carrying the (observed or simulated)
    responses and a fitted model: the refit model when ``cfg.refit`` is set,
    otherwise the model the responses were simulated from.
    """
    nullkind = nullkind or NullModelKind.same_model()
    null_fit, null_design = _null_model(fitted, design, nullkind, opts)
    observed = float(stat(design, fitted))

    def one(b: int) -> tuple[float, bool]:
        resampled = False
        for attempt in (0, 1):
            rng = _replicate_rng(cfg.seed, b, attempt)
            ystar = _draw(null_fit, null_design, cfg, rng)
            full_design = design.with_responses(ystar)
            if not cfg.refit:
                return float(stat(full_design, null_fit)), True
            try:
                refit = fit(full_design, method=fitted.method, opts=opts,
                            diagonal_re=fitted.diagonal_re)
            except FitError:
                refit = None
            if refit is not None and refit.converged:
                return float(stat(full_design, refit)), True
            resampled = True
        if refit is None:
            return float("nan"), False
        return float(stat(full_design, refit)), False

    if cfg.n_jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.n_jobs) as pool:
            pairs = list(pool.map(one, range(cfg.B)))
    else:
        pairs = [one(b) for b in range(cfg.B)]
    values = np.array([v for v, _ in pairs])
    converged = np.array([ok for _, ok in pairs], dtype=bool)
    return BootstrapDistribution(observed=observed, values=values, converged=converged)
