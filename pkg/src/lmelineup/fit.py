"""Two-level linear mixed-effects estimation by ML or REML.

The model for group i is  y_i = X_i beta + Z_i b_i + eps_i  with
b_i ~ N(0, D), eps_i ~ N(0, sigma2 I), independent across groups.

Estimation profiles beta and sigma2 out analytically and minimizes the
resulting deviance over the lower-triangular relative covariance factor
L, where D = sigma2 * L L'. The factorized parameterization keeps D
positive semidefinite including boundary fits (variance components at
zero), which the derivative-free Nelder-Mead search can reach freely.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import optimize
from scipy.linalg import cho_factor, cho_solve

from .data import GroupedDesign

__all__ = [
    "CovarianceSpec",
    "FittedLME",
    "ResidualSet",
    "FitError",
    "CollinearityError",
    "marginal_cov",
    "gls_beta",
    "blup",
    "fit",
    "residuals",
    "full_deviance",
    "fitted_to_json",
    "fitted_from_json",
]

_PSD_TOL = 1e-10


class FitError(RuntimeError):
    """Raised when a model cannot be fit to the given design."""


class CollinearityError(FitError):
    """Raised when the fixed-effect information matrix is singular."""

    def __init__(self, columns: Sequence[str]):
        self.columns = list(columns)
        super().__init__(f"collinear fixed-effect columns: {self.columns}")


@dataclass(frozen=True)
class CovarianceSpec:
    """Random-effect covariance D (q x q, PSD) and residual variance sigma2.
    The within-group correlation is fixed at the identity."""

    D: np.ndarray
    sigma2: float

    def __post_init__(self):
        D = np.asarray(self.D, dtype=float)
        if D.ndim != 2 or D.shape[0] != D.shape[1]:
            raise FitError("D must be square")
        if not np.allclose(D, D.T, atol=1e-8):
            raise FitError("D must be symmetric")
        w, V = np.linalg.eigh(D)
        if w.min() < -_PSD_TOL:
            raise FitError(f"D has negative eigenvalue {w.min():.3e}")
        if w.min() < 0.0:
            # boundary fit: clamp tiny negative eigenvalues to exactly zero
            D = (V * np.maximum(w, 0.0)) @ V.T
            D = (D + D.T) / 2.0
        object.__setattr__(self, "D", D)
        # zero is allowed so degenerate simulators can be expressed; fits
        # always produce a strictly positive estimate
        if not self.sigma2 >= 0.0:
            raise FitError("sigma2 must be nonnegative")

    @property
    def q(self) -> int:
        return self.D.shape[0]


@dataclass(frozen=True)
class FittedLME:
    beta: np.ndarray          # (p,)
    cov: CovarianceSpec
    theta: np.ndarray         # lower-triangular entries of L, diag >= 0
    criterion: float          # -2 log (restricted) likelihood at the optimum
    method: str               # "ML" | "REML"
    converged: bool
    n_iter: int
    x_names: tuple[str, ...] = ()
    z_names: tuple[str, ...] = ()
    diagonal_re: bool = False


@dataclass(frozen=True)
class ResidualSet:
    """level1: conditional residuals per group; level2: predicted random
    effects per group; marginal: y_i - X_i beta per group."""

    level1: tuple[np.ndarray, ...]
    level2: tuple[np.ndarray, ...]
    marginal: tuple[np.ndarray, ...]

    def level1_pooled(self) -> np.ndarray:
        return np.concatenate(self.level1)

    def level2_matrix(self) -> np.ndarray:
        return np.vstack(self.level2)


# ---------------------------------------------------------------------------
# Linear algebra on the marginal covariance


def marginal_cov(cov: CovarianceSpec, design: GroupedDesign, i: int) -> np.ndarray:
    """V_i = Z_i D Z_i' + sigma2 I, symmetrized."""
    Z = design.groups[i].Z
    V = Z @ cov.D @ Z.T + cov.sigma2 * np.eye(Z.shape[0])
    return (V + V.T) / 2.0


def _collinear_columns(design: GroupedDesign) -> list[str]:
    X = np.vstack([gr.X for gr in design.groups])
    from scipy.linalg import qr

    _, R, piv = qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = diag.max() * max(X.shape) * np.finfo(float).eps if diag.size else 0.0
    rank = int((diag > tol).sum())
    return [design.x_names[j] for j in sorted(piv[rank:])]


def gls_beta(design: GroupedDesign, cov: CovarianceSpec) -> np.ndarray:
    """Generalized least squares fixed effects, via per-group Cholesky solves."""
    p = design.p
    info = np.zeros((p, p))
    score = np.zeros(p)
    for i, gr in enumerate(design.groups):
        V = marginal_cov(cov, design, i)
        c = cho_factor(V, lower=True)
        VinvX = cho_solve(c, gr.X)
        info += gr.X.T @ VinvX
        score += VinvX.T @ gr.y
    try:
        c = cho_factor((info + info.T) / 2.0, lower=True)
    except np.linalg.LinAlgError:
        raise CollinearityError(_collinear_columns(design)) from None
    return cho_solve(c, score)


def blup(design: GroupedDesign, cov: CovarianceSpec, beta_hat: np.ndarray) -> list[np.ndarray]:
    """Predicted random effects  b_i = D Z_i' V_i^{-1} (y_i - X_i beta)."""
    out = []
    for i, gr in enumerate(design.groups):
        V = marginal_cov(cov, design, i)
        c = cho_factor(V, lower=True)
        resid = gr.y - gr.X @ beta_hat
        out.append(cov.D @ gr.Z.T @ cho_solve(c, resid))
    return out


def residuals(design: GroupedDesign, fitted: FittedLME) -> ResidualSet:
    """All three residual sets; y_i = X_i beta + Z_i b_i + eps_i holds exactly
    because the conditional residuals are computed by that identity."""
    if fitted.beta.shape[0] != design.p or fitted.cov.q != design.q:
        raise FitError("fitted model does not match design dimensions")
    b = blup(design, fitted.cov, fitted.beta)
    level1, marginal = [], []
    for gr, bi in zip(design.groups, b):
        marg = gr.y - gr.X @ fitted.beta
        level1.append(marg - gr.Z @ bi)
        marginal.append(marg)
    return ResidualSet(level1=tuple(level1), level2=tuple(b), marginal=tuple(marginal))


# ---------------------------------------------------------------------------
# Profiled deviance machinery

_TRIL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _tril_indices(q: int):
    if q not in _TRIL_CACHE:
        _TRIL_CACHE[q] = np.tril_indices(q)
    return _TRIL_CACHE[q]


def _theta_to_factor(theta: np.ndarray, q: int, diagonal: bool) -> np.ndarray:
    L = np.zeros((q, q))
    if diagonal:
        L[np.diag_indices(q)] = theta
    else:
        L[_tril_indices(q)] = theta
    return L


def _factor_to_theta(L: np.ndarray, diagonal: bool) -> np.ndarray:
    q = L.shape[0]
    # flipping the sign of a column leaves L L' unchanged; use that freedom
    # to make the diagonal nonnegative
    signs = np.where(np.diag(L) < 0.0, -1.0, 1.0)
    L = L * signs
    if diagonal:
        return np.diag(L).copy()
    return L[_tril_indices(q)].copy()


class _SuffStats:
    """Per-group cross products; deviance evaluations then cost O(g q^3)
    regardless of group sizes."""

    def __init__(self, design: GroupedDesign):
        g, p, q = design.g, design.p, design.q
        self.Czz = np.empty((g, q, q))
        self.Czx = np.empty((g, q, p))
        self.czy = np.empty((g, q))
        self.Cxx = np.zeros((p, p))
        self.cxy = np.zeros(p)
        self.cyy = 0.0
        self.n = 0
        self.p, self.q, self.g = p, q, g
        for i, gr in enumerate(design.groups):
            self.Czz[i] = gr.Z.T @ gr.Z
            self.Czx[i] = gr.Z.T @ gr.X
            self.czy[i] = gr.Z.T @ gr.y
            self.Cxx += gr.X.T @ gr.X
            self.cxy += gr.X.T @ gr.y
            self.cyy += float(gr.y @ gr.y)
            self.n += len(gr.y)

    def profile(self, L: np.ndarray):
        """Whitened cross products given the relative factor L.

        Returns (logdet_W, XtWX, XtWy, ytWy) where W_i = I + Z_i L L' Z_i'.
        """
        A = np.eye(self.q) + L.T @ self.Czz @ L            # (g, q, q)
        sign, logdetA = np.linalg.slogdet(A)
        if np.any(sign <= 0):
            return None
        LtCzx = L.T @ self.Czx                             # (g, q, p)
        Ltczy = self.czy @ L                               # (g, q)
        AinvLtCzx = np.linalg.solve(A, LtCzx)
        AinvLtczy = np.linalg.solve(A, Ltczy[..., None])[..., 0]
        XtWX = self.Cxx - np.einsum("gab,gac->bc", LtCzx, AinvLtCzx)
        XtWy = self.cxy - np.einsum("gab,ga->b", LtCzx, AinvLtczy)
        ytWy = self.cyy - float(np.einsum("ga,ga->", Ltczy, AinvLtczy))
        return float(logdetA.sum()), XtWX, XtWy, ytWy


def _profiled_deviance(theta, ss: _SuffStats, reml: bool, diagonal: bool) -> float:
    L = _theta_to_factor(np.asarray(theta, dtype=float), ss.q, diagonal)
    prof = ss.profile(L)
    if prof is None:
        return np.inf
    logdetW, XtWX, XtWy, ytWy = prof
    try:
        cfac = cho_factor((XtWX + XtWX.T) / 2.0, lower=True)
    except np.linalg.LinAlgError:
        return np.inf
    beta = cho_solve(cfac, XtWy)
    rss = ytWy - float(beta @ XtWy)
    if rss <= 0.0:
        return np.inf
    n, p = ss.n, ss.p
    if reml:
        logdet_info = 2.0 * float(np.log(np.diag(cfac[0])).sum())
        nmp = n - p
        return logdetW + logdet_info + nmp * (1.0 + math.log(2.0 * math.pi * rss / nmp))
    return logdetW + n * (1.0 + math.log(2.0 * math.pi * rss / n))


def _estimates_at(theta, ss: _SuffStats, reml: bool, diagonal: bool):
    L = _theta_to_factor(np.asarray(theta, dtype=float), ss.q, diagonal)
    prof = ss.profile(L)
    if prof is None:
        raise FitError("covariance factor left the feasible region")
    _, XtWX, XtWy, ytWy = prof
    cfac = cho_factor((XtWX + XtWX.T) / 2.0, lower=True)
    beta = cho_solve(cfac, XtWy)
    rss = max(ytWy - float(beta @ XtWy), 0.0)
    dof = ss.n - ss.p if reml else ss.n
    sigma2 = rss / dof
    return L, beta, sigma2


def full_deviance(design: GroupedDesign, beta: np.ndarray, cov: CovarianceSpec,
                  method: str = "REML") -> float:
    """-2 log (restricted) likelihood evaluated directly from (beta, sigma2, D),
    by dense per-group algebra. Used to cross-check the profiled criterion."""
    logdetV = 0.0
    quad = 0.0
    info = np.zeros((design.p, design.p))
    n = design.n_total
    for i, gr in enumerate(design.groups):
        V = marginal_cov(cov, design, i)
        c = cho_factor(V, lower=True)
        logdetV += 2.0 * float(np.log(np.diag(c[0])).sum())
        r = gr.y - gr.X @ beta
        quad += float(r @ cho_solve(c, r))
        info += gr.X.T @ cho_solve(c, gr.X)
    if method.upper() == "REML":
        sign, logdet_info = np.linalg.slogdet(info)
        return logdetV + logdet_info + quad + (n - design.p) * math.log(2.0 * math.pi)
    return logdetV + quad + n * math.log(2.0 * math.pi)


# ---------------------------------------------------------------------------
# Fitting


@dataclass(frozen=True)
class FitOptions:
    max_evals: int = 10_000
    deviance_rtol: float = 1e-10
    param_tol: float = 1e-8
    max_restarts: int = 6


def fit(design: GroupedDesign, method: str = "REML",
        opts: FitOptions | None = None, diagonal_re: bool = False) -> FittedLME:
    """Estimate the model on ``design`` by Nelder-Mead on the profiled
    deviance, restarting from the incumbent until both the deviance and the
    parameters stop moving. ``diagonal_re=True`` constrains the random
    effects to be uncorrelated (diagonal D)."""
    method = method.upper()
    if method not in ("ML", "REML"):
        raise FitError(f"unknown estimation method {method!r}")
    opts = opts or FitOptions()
    if design.n_total <= design.p:
        raise FitError("fewer rows than fixed-effect columns")
    pooled = np.concatenate([gr.y for gr in design.groups])
    if np.ptp(pooled) == 0.0:
        raise FitError("response has zero variance")

    ss = _SuffStats(design)
    reml = method == "REML"
    q = design.q
    n_par = q if diagonal_re else q * (q + 1) // 2

    # start at L = I: the marginal variance split evenly between D and sigma2
    theta0 = np.ones(n_par) if diagonal_re else _factor_to_theta(np.eye(q), False)

    evals = 0
    converged = False
    current = theta0
    dev = _profiled_deviance(current, ss, reml, diagonal_re)
    if not np.isfinite(dev):
        raise FitError("deviance is not finite at the starting point")

    # restart from the incumbent until the deviance is stable across runs
    # and the final simplex itself converged; on flat ridges the parameters
    # may drift at constant deviance, which the simplex criterion absorbs
    for restart in range(opts.max_restarts):
        budget = opts.max_evals - evals
        if budget <= 0:
            break
        xatol = max(opts.param_tol * 1e-2, 1e-12) * (1.0 + float(np.max(np.abs(current))))
        fatol = max(opts.deviance_rtol * 1e-2, 1e-14) * (1.0 + abs(dev))
        res = optimize.minimize(
            _profiled_deviance, current, args=(ss, reml, diagonal_re),
            method="Nelder-Mead",
            options=dict(xatol=xatol, fatol=fatol, maxfev=budget, maxiter=budget),
        )
        evals += res.nfev
        d_change = abs(dev - res.fun)
        p_change = float(np.max(np.abs(current - res.x)))
        current, dev = res.x, float(res.fun)
        params_settled = (p_change <= opts.param_tol * (1.0 + float(np.max(np.abs(current))))
                          or bool(res.success))
        if (restart >= 1 and d_change <= opts.deviance_rtol * (1.0 + abs(dev))
                and params_settled):
            converged = True
            break

    L, beta, sigma2 = _estimates_at(current, ss, reml, diagonal_re)
    signs = np.where(np.diag(L) < 0.0, -1.0, 1.0)
    L = L * signs
    D = sigma2 * (L @ L.T)
    cov = CovarianceSpec(D=(D + D.T) / 2.0, sigma2=float(sigma2))
    return FittedLME(
        beta=beta,
        cov=cov,
        theta=_factor_to_theta(L, diagonal_re),
        criterion=float(dev),
        method=method,
        converged=converged,
        n_iter=evals,
        x_names=design.x_names,
        z_names=design.z_names,
        diagonal_re=diagonal_re,
    )


# ---------------------------------------------------------------------------
# Serialization

_FIT_FORMAT = "lmelineup/fit-v1"


def fitted_to_json(fitted: FittedLME) -> str:
    doc = {
        "format": _FIT_FORMAT,
        "method": fitted.method,
        "beta": fitted.beta.tolist(),
        "theta": fitted.theta.tolist(),
        "sigma2": fitted.cov.sigma2,
        "D": fitted.cov.D.tolist(),
        "criterion": fitted.criterion,
        "converged": fitted.converged,
        "n_iter": fitted.n_iter,
        "x_names": list(fitted.x_names),
        "z_names": list(fitted.z_names),
        "diagonal_re": fitted.diagonal_re,
    }
    return json.dumps(doc, sort_keys=True)


def fitted_from_json(text: str) -> FittedLME:
    doc = json.loads(text)
    if doc.get("format") != _FIT_FORMAT:
        raise FitError(f"unsupported fit document format {doc.get('format')!r}")
    return FittedLME(
        beta=np.asarray(doc["beta"], dtype=float),
        cov=CovarianceSpec(D=np.asarray(doc["D"], dtype=float), sigma2=float(doc["sigma2"])),
        theta=np.asarray(doc["theta"], dtype=float),
        criterion=float(doc["criterion"]),
        method=doc["method"],
        converged=bool(doc["converged"]),
        n_iter=int(doc["n_iter"]),
        x_names=tuple(doc["x_names"]),
        z_names=tuple(doc["z_names"]),
        diagonal_re=bool(doc.get("diagonal_re", False)),
    )
