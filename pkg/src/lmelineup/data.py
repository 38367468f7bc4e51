"""Tabular data ingestion, model specifications, and per-group design matrices.

A model is described by an ordered list of fixed-effect terms, an ordered
list of random-effect terms (intercept and/or numeric slopes), and a
grouping factor. ``build_design`` turns a spec plus a dataset into the
per-group response vectors and design matrices that the fitting,
bootstrap, and diagnostic layers consume.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

__all__ = [
    "Dataset",
    "Term",
    "intercept",
    "column",
    "poly",
    "ModelSpec",
    "GroupData",
    "GroupedDesign",
    "DataError",
    "load_csv",
    "parse_spec_config",
    "build_design",
    "drop_fixed_term",
    "drop_random_term",
    "synth_dataset",
]

_MISSING_TOKENS = {"", "na", "nan", "null", "none", "."}


class DataError(ValueError):
    """Raised for unusable input data or malformed model specifications."""


# ---------------------------------------------------------------------------
# Dataset


@dataclass(frozen=True)
class Dataset:
    """Immutable column store. Numeric columns are float64 arrays, categorical
    columns are string arrays; all columns have equal length and no missing
    entries (rows with missing required fields are dropped at load time).
    """

    columns: Mapping[str, np.ndarray]
    n_rows: int
    dropped_rows: int = 0

    def __post_init__(self):
        for name, col in self.columns.items():
            if len(col) != self.n_rows:
                raise DataError(f"column {name!r} has {len(col)} rows, expected {self.n_rows}")
            if col.dtype.kind == "f" and not np.all(np.isfinite(col)):
                raise DataError(f"column {name!r} contains non-finite values")
        if self.n_rows == 0:
            raise DataError("dataset is empty after filtering")

    def numeric(self, name: str) -> np.ndarray:
        col = self._get(name)
        if col.dtype.kind != "f":
            raise DataError(f"column {name!r} is not numeric")
        return col

    def categorical(self, name: str) -> np.ndarray:
        col = self._get(name)
        if col.dtype.kind == "f":
            raise DataError(f"column {name!r} is not categorical")
        return col

    def is_numeric(self, name: str) -> bool:
        return self._get(name).dtype.kind == "f"

    def _get(self, name: str) -> np.ndarray:
        try:
            return self.columns[name]
        except KeyError:
            raise DataError(f"no column named {name!r}") from None


def load_csv(path, schema: Mapping[str, str]) -> Dataset:
    """Read a headered CSV, keeping the columns named in ``schema``.

    ``schema`` maps column name to ``"numeric"`` or ``"categorical"``. Rows
    with a missing value in any required column are dropped and counted in
    ``Dataset.dropped_rows``. A non-missing value that fails numeric parsing
    in a numeric column is a type mismatch and raises.
    """
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"{path}: no header row")
        missing_cols = [c for c in schema if c not in reader.fieldnames]
        if missing_cols:
            raise DataError(f"{path}: missing columns {missing_cols}")
        raw = {name: [] for name in schema}
        dropped = 0
        for row in reader:
            values = {name: (row[name] or "").strip() for name in schema}
            if any(v.lower() in _MISSING_TOKENS for v in values.values()):
                dropped += 1
                continue
            for name, v in values.items():
                raw[name].append(v)
    columns = {}
    for name, kind in schema.items():
        if kind == "numeric":
            try:
                columns[name] = np.array([float(v) for v in raw[name]], dtype=float)
            except ValueError as exc:
                raise DataError(f"{path}: column {name!r} declared numeric: {exc}") from exc
        elif kind == "categorical":
            columns[name] = np.array(raw[name], dtype=str)
        else:
            raise DataError(f"unknown column type {kind!r} for {name!r}")
    n = len(next(iter(columns.values()))) if columns else 0
    if n == 0:
        raise DataError(f"{path}: no usable rows after filtering ({dropped} dropped)")
    return Dataset(columns=columns, n_rows=n, dropped_rows=dropped)


# ---------------------------------------------------------------------------
# Model specification


@dataclass(frozen=True)
class Term:
    """One design term: the intercept, a single column's main effect, or a
    centered raw-power polynomial of a numeric column."""

    kind: str  # "intercept" | "column" | "poly"
    column: str | None = None
    degree: int = 1

    def __post_init__(self):
        if self.kind not in ("intercept", "column", "poly"):
            raise DataError(f"unknown term kind {self.kind!r}")
        if self.kind != "intercept" and not self.column:
            raise DataError(f"{self.kind} term needs a column name")
        if self.kind == "poly" and self.degree < 1:
            raise DataError("polynomial degree must be >= 1")

    def label(self) -> str:
        if self.kind == "intercept":
            return "(intercept)"
        if self.kind == "poly":
            return f"poly({self.column},{self.degree})"
        return str(self.column)


def intercept() -> Term:
    return Term("intercept")


def column(name: str) -> Term:
    return Term("column", name)


def poly(name: str, degree: int) -> Term:
    return Term("poly", name, degree)


@dataclass(frozen=True)
class ModelSpec:
    """Response, ordered fixed terms, ordered random terms, grouping factor."""

    response: str
    fixed_terms: tuple[Term, ...]
    random_terms: tuple[Term, ...]
    group_factor: str

    def __post_init__(self):
        object.__setattr__(self, "fixed_terms", tuple(self.fixed_terms))
        object.__setattr__(self, "random_terms", tuple(self.random_terms))
        if not self.fixed_terms:
            raise DataError("at least one fixed term is required")
        if not self.random_terms:
            raise DataError("at least one random term is required")
        for t in self.random_terms:
            if t.kind == "poly":
                raise DataError("random terms must be the intercept or a numeric slope")


def drop_fixed_term(spec: ModelSpec, c: int) -> ModelSpec:
    """Remove fixed term ``c`` (0-based); random structure is untouched."""
    if not 0 <= c < len(spec.fixed_terms):
        raise DataError(f"fixed term index {c} out of range")
    if len(spec.fixed_terms) == 1:
        raise DataError("cannot drop the only fixed term")
    kept = spec.fixed_terms[:c] + spec.fixed_terms[c + 1 :]
    return replace(spec, fixed_terms=kept)


def drop_random_term(spec: ModelSpec, j: int) -> ModelSpec:
    """Remove random term ``j`` (0-based); requires at least two random terms."""
    if len(spec.random_terms) < 2:
        raise DataError("cannot drop a random term when q = 1")
    if not 0 <= j < len(spec.random_terms):
        raise DataError(f"random term index {j} out of range")
    kept = spec.random_terms[:j] + spec.random_terms[j + 1 :]
    return replace(spec, random_terms=kept)


def _split_terms(text: str) -> list[str]:
    # commas inside poly(...) do not separate terms
    tokens, depth, cur = [], 0, []
    for ch in text:
        if ch == "," and depth == 0:
            tokens.append("".join(cur))
            cur = []
            continue
        depth += ch == "("
        depth -= ch == ")"
        cur.append(ch)
    tokens.append("".join(cur))
    return tokens


def _parse_term_list(text: str) -> tuple[Term, ...]:
    terms = []
    for token in filter(None, (t.strip() for t in _split_terms(text))):
        low = token.lower()
        if low in ("intercept", "1"):
            terms.append(intercept())
        elif low.startswith("poly(") and token.endswith(")"):
            inner = token[5:-1]
            parts = [p.strip() for p in inner.split(",")]
            if len(parts) != 2:
                raise DataError(f"malformed poly term {token!r}")
            terms.append(poly(parts[0], int(parts[1])))
        else:
            terms.append(column(token))
    return tuple(terms)


def parse_spec_config(text: str) -> ModelSpec:
    """Parse a key-value model config (``response``, ``fixed``, ``random``,
    ``group`` keys; term lists are comma separated)."""
    keys = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"config line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        keys[key.lower()] = value
    for required in ("response", "fixed", "random", "group"):
        if required not in keys:
            raise DataError(f"config is missing the {required!r} key")
    return ModelSpec(
        response=keys["response"],
        fixed_terms=_parse_term_list(keys["fixed"]),
        random_terms=_parse_term_list(keys["random"]),
        group_factor=keys["group"],
    )


# ---------------------------------------------------------------------------
# Grouped design


@dataclass(frozen=True)
class GroupData:
    label: str
    y: np.ndarray   # (n_i,)
    X: np.ndarray   # (n_i, p)
    Z: np.ndarray   # (n_i, q)
    x_rank: int


@dataclass(frozen=True)
class GroupedDesign:
    """Per-group responses and design matrices, plus the term-to-column map
    needed to derive reduced (null-model) designs structurally."""

    groups: tuple[GroupData, ...]
    x_names: tuple[str, ...]
    z_names: tuple[str, ...]
    fixed_slices: tuple[tuple[int, int], ...]
    random_slices: tuple[tuple[int, int], ...]
    warnings: tuple[str, ...] = ()

    @property
    def g(self) -> int:
        return len(self.groups)

    @property
    def p(self) -> int:
        return len(self.x_names)

    @property
    def q(self) -> int:
        return len(self.z_names)

    @property
    def n_total(self) -> int:
        return sum(len(gr.y) for gr in self.groups)

    def responses(self) -> list[np.ndarray]:
        return [gr.y for gr in self.groups]

    def with_responses(self, y_groups: Sequence[np.ndarray]) -> "GroupedDesign":
        """Same structure with replaced response vectors (bootstrap samples)."""
        if len(y_groups) != self.g:
            raise DataError("response list does not match group count")
        groups = []
        for gr, y in zip(self.groups, y_groups):
            y = np.asarray(y, dtype=float)
            if y.shape != gr.y.shape:
                raise DataError(f"group {gr.label!r}: response length mismatch")
            groups.append(GroupData(gr.label, y, gr.X, gr.Z, gr.x_rank))
        return replace(self, groups=tuple(groups))

    def drop_fixed(self, c: int) -> "GroupedDesign":
        """Column-level equivalent of dropping fixed term ``c`` and rebuilding."""
        if not 0 <= c < len(self.fixed_slices):
            raise DataError(f"fixed term index {c} out of range")
        if len(self.fixed_slices) == 1:
            raise DataError("cannot drop the only fixed term")
        lo, hi = self.fixed_slices[c]
        keep = [j for j in range(self.p) if not lo <= j < hi]
        width = hi - lo
        slices = []
        for i, (a, b) in enumerate(self.fixed_slices):
            if i == c:
                continue
            slices.append((a, b) if b <= lo else (a - width, b - width))
        groups = tuple(
            GroupData(gr.label, gr.y, gr.X[:, keep],
                      gr.Z, int(np.linalg.matrix_rank(gr.X[:, keep])))
            for gr in self.groups
        )
        return replace(self, groups=groups,
                       x_names=tuple(self.x_names[j] for j in keep),
                       fixed_slices=tuple(slices))

    def drop_random(self, j: int) -> "GroupedDesign":
        """Column-level equivalent of dropping random term ``j``."""
        if self.q < 2:
            raise DataError("cannot drop a random term when q = 1")
        if not 0 <= j < len(self.random_slices):
            raise DataError(f"random term index {j} out of range")
        lo, hi = self.random_slices[j]
        keep = [k for k in range(self.q) if not lo <= k < hi]
        width = hi - lo
        slices = []
        for i, (a, b) in enumerate(self.random_slices):
            if i == j:
                continue
            slices.append((a, b) if b <= lo else (a - width, b - width))
        groups = tuple(
            GroupData(gr.label, gr.y, gr.X, gr.Z[:, keep], gr.x_rank)
            for gr in self.groups
        )
        return replace(self, groups=groups,
                       z_names=tuple(self.z_names[k] for k in keep),
                       random_slices=tuple(slices))


def _expand_term(term: Term, data: Dataset) -> tuple[np.ndarray, list[str]]:
    n = data.n_rows
    if term.kind == "intercept":
        return np.ones((n, 1)), ["(intercept)"]
    if term.kind == "column":
        if data.is_numeric(term.column):
            return data.numeric(term.column).reshape(-1, 1), [term.column]
        # reference coding against the first level in sort order
        values = data.categorical(term.column)
        levels = sorted(set(values.tolist()))
        if len(levels) < 2:
            raise DataError(f"categorical column {term.column!r} has a single level")
        cols = np.column_stack([(values == lev).astype(float) for lev in levels[1:]])
        names = [f"{term.column}={lev}" for lev in levels[1:]]
        return cols, names
    # raw powers of the mean-centered column, for conditioning
    x = data.numeric(term.column)
    centered = x - x.mean()
    cols = np.column_stack([centered ** d for d in range(1, term.degree + 1)])
    names = [f"{term.column}^{d}" for d in range(1, term.degree + 1)]
    return cols, names


def build_design(spec: ModelSpec, data: Dataset) -> GroupedDesign:
    """Assemble per-group (y_i, X_i, Z_i) in spec term order."""
    labels = data.categorical(spec.group_factor)
    y = data.numeric(spec.response)

    x_blocks, x_names, fixed_slices = [], [], []
    for term in spec.fixed_terms:
        block, names = _expand_term(term, data)
        fixed_slices.append((len(x_names), len(x_names) + len(names)))
        x_blocks.append(block)
        x_names.extend(names)
    X = np.hstack(x_blocks)

    z_blocks, z_names, random_slices = [], [], []
    for term in spec.random_terms:
        if term.kind == "column" and not data.is_numeric(term.column):
            raise DataError(f"random slope column {term.column!r} must be numeric")
        block, names = _expand_term(term, data)
        random_slices.append((len(z_names), len(z_names) + len(names)))
        z_blocks.append(block)
        z_names.extend(names)
    Z = np.hstack(z_blocks)

    warnings = []
    if np.linalg.matrix_rank(X) < X.shape[1]:
        warnings.append("global fixed-effect matrix is rank deficient")

    groups = []
    for label in sorted(set(labels.tolist())):
        mask = labels == label
        if not mask.any():
            raise DataError(f"group {label!r} has no rows")
        Xi = X[mask]
        groups.append(GroupData(
            label=str(label), y=y[mask].copy(), X=Xi.copy(), Z=Z[mask].copy(),
            x_rank=int(np.linalg.matrix_rank(Xi)),
        ))
    return GroupedDesign(
        groups=tuple(groups),
        x_names=tuple(x_names),
        z_names=tuple(z_names),
        fixed_slices=tuple(fixed_slices),
        random_slices=tuple(random_slices),
        warnings=tuple(warnings),
    )


# ---------------------------------------------------------------------------
# Synthetic datasets


def _check_psd(D: np.ndarray) -> np.ndarray:
    D = np.asarray(D, dtype=float)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise DataError("D must be a square matrix")
    if not np.allclose(D, D.T, atol=1e-12):
        raise DataError("D must be symmetric")
    if np.linalg.eigvalsh(D).min() < -1e-10:
        raise DataError("D must be positive semidefinite")
    return D


def _sigma_scales(g: int, spread: float) -> np.ndarray:
    # per-group residual-sd multipliers, log-spaced in [1/spread, spread]
    if spread < 1.0:
        raise DataError("sigma_spread must be >= 1")
    if spread == 1.0 or g == 1:
        return np.ones(g)
    return np.exp(np.linspace(-math.log(spread), math.log(spread), g))


def synth_dataset(kind: str, params: Mapping | None = None, seed: int = 0) -> Dataset:
    """Generate a small synthetic dataset of one of four shapes:

    - ``balanced_oneway``: g equal groups, intercept-only mean, random
      intercept (columns ``y``, ``group``).
    - ``radon_like``: many unbalanced groups with a binary covariate and a
      random intercept + slope (columns ``y``, ``floor``, ``group``).
    - ``longitudinal_like``: subjects observed over weeks 0..4 with dropout
      (columns ``y``, ``week``, ``group``).
    - ``dialyzer_like``: few subjects, responses polynomial in a pressure
      sweep (columns ``y``, ``pressure``, ``group``).

    ``params['sigma_spread'] > 1`` makes the level-1 spread heterogeneous
    across groups. The same (kind, params, seed) always produces the same
    dataset.
    """
    params = dict(params or {})
    rng = np.random.default_rng(seed)
    spread = float(params.pop("sigma_spread", 1.0))

    if kind == "balanced_oneway":
        g = int(params.pop("g", 8))
        n = int(params.pop("n", 6))
        beta = float(params.pop("beta", 0.0))
        tau2 = float(params.pop("tau2", 1.0))
        sigma2 = float(params.pop("sigma2", 1.0))
        _reject_unused(kind, params)
        if min(g, n) < 1 or tau2 < 0 or sigma2 <= 0:
            raise DataError("invalid balanced_oneway parameters")
        scales = _sigma_scales(g, spread)
        b = rng.normal(0.0, math.sqrt(tau2), g)
        ys, groups = [], []
        for i in range(g):
            ys.append(beta + b[i] + rng.normal(0.0, math.sqrt(sigma2) * scales[i], n))
            groups.extend([f"g{i + 1:03d}"] * n)
        return Dataset({"y": np.concatenate(ys), "group": np.array(groups, dtype=str)},
                       n_rows=g * n)

    if kind == "radon_like":
        g = int(params.pop("g", 85))
        beta = np.asarray(params.pop("beta", (1.3, -0.6)), dtype=float)
        D = _check_psd(params.pop("D", ((0.12, 0.03), (0.03, 0.10))))
        sigma2 = float(params.pop("sigma2", 0.55))
        size_log_mean = float(params.pop("size_log_mean", 1.45))
        size_log_sd = float(params.pop("size_log_sd", 0.8))
        _reject_unused(kind, params)
        # skewed group sizes with a median of a handful of rows per group
        sizes = 1 + np.floor(np.exp(rng.normal(size_log_mean, size_log_sd, g))).astype(int)
        scales = _sigma_scales(g, spread)
        rows_y, rows_x, rows_g = [], [], []
        for i in range(g):
            n_i = int(sizes[i])
            floor_ind = (rng.random(n_i) < 0.4).astype(float)
            b = rng.multivariate_normal(np.zeros(2), D)
            mean = beta[0] + beta[1] * floor_ind + b[0] + b[1] * floor_ind
            rows_y.append(mean + rng.normal(0.0, math.sqrt(sigma2) * scales[i], n_i))
            rows_x.append(floor_ind)
            rows_g.extend([f"c{i + 1:03d}"] * n_i)
        return Dataset({"y": np.concatenate(rows_y),
                        "floor": np.concatenate(rows_x),
                        "group": np.array(rows_g, dtype=str)},
                       n_rows=int(sizes.sum()))

    if kind == "longitudinal_like":
        g = int(params.pop("g", 66))
        beta = np.asarray(params.pop("beta", (3.0, -0.4)), dtype=float)
        D = _check_psd(params.pop("D", ((0.8, 0.0), (0.0, 0.08))))
        sigma2 = float(params.pop("sigma2", 0.5))
        dropout = float(params.pop("dropout", 0.08))
        _reject_unused(kind, params)
        scales = _sigma_scales(g, spread)
        rows_y, rows_x, rows_g = [], [], []
        for i in range(g):
            weeks = [0]
            for w in range(1, 5):
                if rng.random() < dropout:
                    break
                weeks.append(w)
            t = np.array(weeks, dtype=float)
            b = rng.multivariate_normal(np.zeros(2), D)
            mean = beta[0] + beta[1] * t + b[0] + b[1] * t
            rows_y.append(mean + rng.normal(0.0, math.sqrt(sigma2) * scales[i], len(t)))
            rows_x.append(t)
            rows_g.extend([f"s{i + 1:03d}"] * len(t))
        ytot = np.concatenate(rows_y)
        return Dataset({"y": ytot,
                        "week": np.concatenate(rows_x),
                        "group": np.array(rows_g, dtype=str)},
                       n_rows=len(ytot))

    if kind == "dialyzer_like":
        g = int(params.pop("g", 20))
        beta = np.asarray(params.pop("beta", (60.0, 30.0, -6.0, -1.2, 0.5)), dtype=float)
        D = _check_psd(params.pop("D", ((16.0, 0.0), (0.0, 4.0))))
        sigma2 = float(params.pop("sigma2", 9.0))
        _reject_unused(kind, params)
        pressures = np.linspace(0.5, 3.0, 7)
        centered = pressures - pressures.mean()
        scales = _sigma_scales(g, spread)
        rows_y, rows_x, rows_g = [], [], []
        for i in range(g):
            b = rng.multivariate_normal(np.zeros(2), D)
            mean = sum(beta[d] * centered ** d for d in range(len(beta)))
            mean = mean + b[0] + b[1] * centered
            rows_y.append(mean + rng.normal(0.0, math.sqrt(sigma2) * scales[i], len(pressures)))
            rows_x.append(pressures)
            rows_g.extend([f"d{i + 1:02d}"] * len(pressures))
        ytot = np.concatenate(rows_y)
        return Dataset({"y": ytot,
                        "pressure": np.concatenate(rows_x),
                        "group": np.array(rows_g, dtype=str)},
                       n_rows=len(ytot))

    raise DataError(f"unknown synthetic dataset kind {kind!r}")


def _reject_unused(kind: str, params: Mapping):
    if params:
        raise DataError(f"unknown {kind} parameters: {sorted(params)}")
