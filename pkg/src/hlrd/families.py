"""Distribution families: exact entries, Stirling forms, kernel identification.

Three one-parameter families are supported, each viewed as a matrix over a
row grid and a column grid:

* binomial with n trials: rows are the outcomes k (so p = k/n), columns
  discretize the success probability q in (0, 1);
* Poisson: rows are the counts k, columns discretize the intensity
  lambda in (0, lambda_max];
* chi-squared: rows discretize the argument x in (0, x_max], columns are
  the integer degrees of freedom k = 1..k_max.

Every exact entry is evaluated in log space (log-gamma instead of
factorials) and exponentiated, so nothing overflows even at n = 2^14.
``entry_stirling`` exposes the Stirling reduction
``prefactor * exp(-n_eff * divergence)`` that explains why the matrices
compress; ``kernel_map`` returns the full identification (divergence
kind, coordinate maps, prefactors) that the compression machinery uses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy.special import gammaln

from . import _kernels
from .divergence import DivergenceKind, divergence

__all__ = [
    "BinomialFamily",
    "ChiSquaredFamily",
    "FamilySpec",
    "KernelMap",
    "PoissonFamily",
    "StirlingUndefinedError",
    "dense_matrix",
    "entry_exact",
    "entry_stirling",
    "kernel_map",
]


class StirlingUndefinedError(ValueError):
    """Stirling-form undefined here (singular row or column)."""


@dataclass(frozen=True)
class BinomialFamily:
    """Binomial(n) matrix: rows k = 0..n, columns q_j = (j + 1/2)/cols."""

    n: int
    cols: int = 0  # 0 means: match n

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("binomial needs n >= 1")
        if self.cols == 0:
            object.__setattr__(self, "cols", self.n)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n + 1, self.cols)

    def row_values(self) -> np.ndarray:
        return np.arange(self.n + 1, dtype=np.float64)

    def col_values(self) -> np.ndarray:
        return (np.arange(self.cols, dtype=np.float64) + 0.5) / self.cols


@dataclass(frozen=True)
class PoissonFamily:
    """Poisson matrix: rows k = 0..k_max, columns lambda on (0, lambda_max]."""

    k_max: int
    lambda_max: float
    lambda_grid: int

    def __post_init__(self):
        if self.k_max < 1 or self.lambda_grid < 1 or not self.lambda_max > 0:
            raise ValueError("invalid Poisson family parameters")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.k_max + 1, self.lambda_grid)

    def row_values(self) -> np.ndarray:
        return np.arange(self.k_max + 1, dtype=np.float64)

    def col_values(self) -> np.ndarray:
        j = np.arange(1, self.lambda_grid + 1, dtype=np.float64)
        return j * (self.lambda_max / self.lambda_grid)


@dataclass(frozen=True)
class ChiSquaredFamily:
    """Chi-squared matrix: rows x on (0, x_max], columns k = 1..k_max."""

    x_max: float
    x_grid: int
    k_max: int

    def __post_init__(self):
        if self.k_max < 1 or self.x_grid < 1 or not self.x_max > 0:
            raise ValueError("invalid chi-squared family parameters")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.x_grid, self.k_max)

    def row_values(self) -> np.ndarray:
        i = np.arange(1, self.x_grid + 1, dtype=np.float64)
        return i * (self.x_max / self.x_grid)

    def col_values(self) -> np.ndarray:
        return np.arange(1, self.k_max + 1, dtype=np.float64)


FamilySpec = Union[BinomialFamily, PoissonFamily, ChiSquaredFamily]


@dataclass(frozen=True)
class KernelMap:
    """Identification of a family matrix with a divergence kernel.

    ``p_of_row`` / ``q_of_col`` give the kernel coordinates of every row /
    column; the exact entry factors as
    ``exp(exact_log_prefactor) * exp(-n_eff * divergence(kind, p, q))``
    where the exact prefactor depends only on the ``prefactor_axis``
    index.  ``stirling_prefactor`` is the classical approximation of that
    prefactor; it is what ``entry_stirling`` uses.  Singular rows/columns
    are where both prefactor forms break down and are stored dense by the
    hierarchical assembly.
    """

    kind: DivergenceKind
    p_of_row: np.ndarray
    q_of_col: np.ndarray
    n_eff: float
    prefactor_axis: str  # "row" or "col"
    stirling_prefactor: Callable[[np.ndarray], np.ndarray]
    exact_log_prefactor: np.ndarray
    singular_rows: tuple[int, ...]
    singular_cols: tuple[int, ...]


# ---------------------------------------------------------------------------
# exact entries
# ---------------------------------------------------------------------------

def _binomial_exact(spec: BinomialFamily, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    k = spec.row_values()[rows]
    q = spec.col_values()[cols]
    lc = gammaln(spec.n + 1.0) - gammaln(k + 1.0) - gammaln(spec.n - k + 1.0)
    return np.exp(lc + k * np.log(q) + (spec.n - k) * np.log1p(-q))


def _poisson_exact(spec: PoissonFamily, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    k = spec.row_values()[rows]
    lam = spec.col_values()[cols]
    return np.exp(k * np.log(lam) - lam - gammaln(k + 1.0))


def _chisq_exact(spec: ChiSquaredFamily, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    x = spec.row_values()[rows]
    half = 0.5 * spec.col_values()[cols]
    return np.exp((half - 1.0) * np.log(x) - 0.5 * x - half * math.log(2.0) - gammaln(half))


def entry_exact(spec: FamilySpec, row, col):
    """Exact matrix entries, elementwise over broadcast integer indices."""
    rows = np.asarray(row, dtype=np.intp)
    cols = np.asarray(col, dtype=np.intp)
    scalar = rows.ndim == 0 and cols.ndim == 0
    n_rows, n_cols = spec.shape
    if np.any(rows < 0) or np.any(rows >= n_rows) or np.any(cols < 0) or np.any(cols >= n_cols):
        raise IndexError(f"index out of range for family of shape {spec.shape}")
    rows, cols = np.broadcast_arrays(rows, cols)
    if isinstance(spec, BinomialFamily):
        out = _binomial_exact(spec, rows, cols)
    elif isinstance(spec, PoissonFamily):
        out = _poisson_exact(spec, rows, cols)
    else:
        out = _chisq_exact(spec, rows, cols)
    return float(out) if scalar else out


def dense_matrix(spec: FamilySpec) -> np.ndarray:
    """The full dense matrix, via the grid kernels (numba path by default)."""
    if isinstance(spec, BinomialFamily):
        return _kernels.binomial_pmf_grid(spec.n, spec.row_values(), spec.col_values())
    if isinstance(spec, PoissonFamily):
        return _kernels.poisson_pmf_grid(spec.row_values(), spec.col_values())
    return _kernels.chisq_pdf_grid(spec.row_values(), spec.col_values())


# ---------------------------------------------------------------------------
# kernel identification and Stirling form
# ---------------------------------------------------------------------------

def kernel_map(spec: FamilySpec) -> KernelMap:
    """Identify the family with its divergence kernel.

    binomial  -> Bernoulli KL with p = k/n, n_eff = n
    Poisson   -> rate divergence with p = k, q = lambda, n_eff = 1
    chi^2     -> dual rate divergence with p = x/2, q = k/2 - 1, n_eff = 1
    """
    if isinstance(spec, BinomialFamily):
        n = spec.n
        k = spec.row_values()
        p = k / n
        with np.errstate(divide="ignore", invalid="ignore"):
            # exact row prefactor: C(n,k) (k/n)^k (1-k/n)^(n-k); singular ends excluded
            log_pref = (gammaln(n + 1.0) - gammaln(k + 1.0) - gammaln(n - k + 1.0)
                        + k * np.log(p) + (n - k) * np.log1p(-p))
        log_pref[0] = np.nan
        log_pref[-1] = np.nan

        def stirling_pref(idx, _n=n):
            pp = np.asarray(idx, dtype=np.float64) / _n
            return 1.0 / np.sqrt(2.0 * math.pi * _n * pp * (1.0 - pp))

        return KernelMap(
            kind=DivergenceKind.BERNOULLI,
            p_of_row=p,
            q_of_col=spec.col_values(),
            n_eff=float(n),
            prefactor_axis="row",
            stirling_prefactor=stirling_pref,
            exact_log_prefactor=log_pref,
            singular_rows=(0, n),
            singular_cols=(),
        )

    if isinstance(spec, PoissonFamily):
        k = spec.row_values()
        with np.errstate(divide="ignore", invalid="ignore"):
            # exact row prefactor: k^k e^{-k} / k!
            log_pref = k * np.log(k) - k - gammaln(k + 1.0)
        log_pref[0] = np.nan

        def stirling_pref(idx):
            kk = np.asarray(idx, dtype=np.float64)
            return 1.0 / np.sqrt(2.0 * math.pi * kk)

        return KernelMap(
            kind=DivergenceKind.RATE,
            p_of_row=k,
            q_of_col=spec.col_values(),
            n_eff=1.0,
            prefactor_axis="row",
            stirling_prefactor=stirling_pref,
            exact_log_prefactor=log_pref,
            singular_rows=(0,),
            singular_cols=(),
        )

    if isinstance(spec, ChiSquaredFamily):
        kcol = spec.col_values()
        qc = 0.5 * kcol - 1.0
        with np.errstate(divide="ignore", invalid="ignore"):
            # exact column prefactor: q^q e^{-q} / (2 Gamma(q+1)) with q = k/2 - 1
            log_pref = qc * np.log(qc) - qc - math.log(2.0) - gammaln(qc + 1.0)
        singular = tuple(int(j) for j in np.nonzero(kcol <= 2.0)[0])
        for j in singular:
            log_pref[j] = np.nan

        def stirling_pref(idx, _k=kcol):
            qq = 0.5 * np.asarray(_k[np.asarray(idx, dtype=np.intp)], dtype=np.float64) - 1.0
            return 1.0 / (2.0 * np.sqrt(2.0 * math.pi * qq))

        return KernelMap(
            kind=DivergenceKind.RATE_DUAL,
            p_of_row=0.5 * spec.row_values(),
            q_of_col=qc,
            n_eff=1.0,
            prefactor_axis="col",
            stirling_prefactor=stirling_pref,
            exact_log_prefactor=log_pref,
            singular_rows=(),
            singular_cols=singular,
        )

    raise TypeError(f"unsupported family {spec!r}")


def entry_stirling(spec: FamilySpec, row: int, col: int) -> float:
    """Stirling-form entry: prefactor * exp(-n_eff * divergence).

    Raises StirlingUndefinedError on the singular rows/columns (binomial
    p in {0, 1}; Poisson k = 0; chi-squared k <= 2), which the assembly
    stores exactly instead.
    """
    kmap = kernel_map(spec)
    n_rows, n_cols = spec.shape
    if not (0 <= row < n_rows and 0 <= col < n_cols):
        raise IndexError(f"index out of range for family of shape {spec.shape}")
    if row in kmap.singular_rows or col in kmap.singular_cols:
        raise StirlingUndefinedError(
            f"Stirling-form undefined here: row={row}, col={col} is singular for {type(spec).__name__}")
    p = kmap.p_of_row[row]
    q = kmap.q_of_col[col]
    div = divergence(kmap.kind, p, q)
    if kmap.prefactor_axis == "row":
        pref = float(kmap.stirling_prefactor(np.asarray([row]))[0])
    else:
        pref = float(kmap.stirling_prefactor(np.asarray([col]))[0])
    return pref * math.exp(-kmap.n_eff * div)
