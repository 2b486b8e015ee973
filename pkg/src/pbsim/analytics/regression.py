"""Least squares with absorbed fixed effects (within transformation)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class RankDeficiencyError(ValueError):
    """The design is singular; ``column`` names the first redundant regressor."""

    def __init__(self, column: str, message: str = ""):
        super().__init__(message or f"design matrix is rank deficient at column {column!r}")
        self.column = column


@dataclass(frozen=True)
class RegressionResult:
    names: tuple[str, ...]
    coef: np.ndarray
    se: np.ndarray
    r2: float
    n: int
    fe_count: int  # number of absorbed groups (0 without fixed effects)
    dropped: tuple[str, ...] = ()
    resid_dof: int = field(default=0)

    def __post_init__(self) -> None:
        if not (len(self.names) == len(self.coef) == len(self.se)):
            raise ValueError("names, coef and se must have equal length")

    def __getitem__(self, name: str) -> float:
        return float(self.coef[self.names.index(name)])

    def stderr(self, name: str) -> float:
        return float(self.se[self.names.index(name)])

    @property
    def tstat(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.coef / self.se

    def rows(self) -> list[dict]:
        return [{"term": n, "coef": float(c), "se": float(s)} for n, c, s in zip(self.names, self.coef, self.se)]


def demean(a: np.ndarray, groups: np.ndarray) -> tuple[np.ndarray, int]:
    """Subtract group means from ``a`` (1-d or column-wise 2-d)."""
    codes, inv = np.unique(groups, return_inverse=True)
    counts = np.bincount(inv).astype(float)
    if a.ndim == 1:
        means = np.bincount(inv, weights=a) / counts
        return a - means[inv], len(codes)
    out = np.empty_like(a, dtype=float)
    for j in range(a.shape[1]):
        means = np.bincount(inv, weights=a[:, j]) / counts
        out[:, j] = a[:, j] - means[inv]
    return out, len(codes)


def independent_columns(X: np.ndarray, tol: float = 1e-10) -> list[int]:
    """Indices of columns not (numerically) spanned by earlier columns.

    Sequential Gram-Schmidt: a column is redundant when its residual on the
    kept columns is tiny relative to its own norm.
    """
    basis: list[np.ndarray] = []
    keep = []
    for j in range(X.shape[1]):
        col = X[:, j].astype(float)
        norm = np.linalg.norm(col)
        if norm == 0.0:
            continue
        r = col.copy()
        for _ in range(2):  # re-orthogonalise once for stability
            for q in basis:
                r -= (q @ r) * q
        rn = np.linalg.norm(r)
        if rn <= tol * norm:
            continue
        basis.append(r / rn)
        keep.append(j)
    return keep


def ols(y, X, groups=None, names: Sequence[str] | None = None, *, drop_collinear: bool = False,
        tol: float = 1e-10) -> RegressionResult:
    """OLS via the normal equations, absorbing ``groups`` fixed effects by demeaning.

    Standard errors are classical (homoskedastic) with ``n - k - G`` residual
    degrees of freedom.  R^2 is computed on the demeaned model; without fixed
    effects it is centred if a constant column is present, otherwise uncentred.
    A singular design raises :class:`RankDeficiencyError` naming the offending
    column unless ``drop_collinear`` is set, in which case such columns are
    dropped and listed in ``dropped``.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, k = X.shape
    if len(y) != n:
        raise ValueError("y and X have different numbers of rows")
    names = tuple(names) if names is not None else tuple(f"x{j}" for j in range(k))
    if len(names) != k:
        raise ValueError("one name per column required")

    G = 0
    if groups is not None:
        groups = np.asarray(groups)
        y, G = demean(y, groups)
        X, _ = demean(X, groups)

    keep = independent_columns(X, tol)
    if len(keep) < k:
        bad = [names[j] for j in range(k) if j not in keep]
        if not drop_collinear:
            raise RankDeficiencyError(bad[0])
    dropped = tuple(names[j] for j in range(k) if j not in keep)
    Xk = X[:, keep]
    kk = len(keep)
    dof = n - kk - G
    if dof <= 0:
        raise ValueError(f"not enough observations: n={n}, k={kk}, groups={G}")

    xtx = Xk.T @ Xk
    xty = Xk.T @ y
    beta = np.linalg.solve(xtx, xty) if kk else np.zeros(0)
    resid = y - Xk @ beta
    ssr = float(resid @ resid)
    has_const = groups is None and any(np.all(Xk[:, j] == Xk[0, j]) and Xk[0, j] != 0 for j in range(kk))
    tss = float(((y - y.mean()) ** 2).sum()) if (groups is not None or has_const) else float(y @ y)
    r2 = 1.0 - ssr / tss if tss > 0 else (1.0 if ssr <= 1e-24 else 0.0)
    r2 = min(1.0, max(0.0, r2))
    sigma2 = ssr / dof
    se = np.sqrt(np.maximum(np.diag(np.linalg.inv(xtx)) * sigma2, 0.0)) if kk else np.zeros(0)
    return RegressionResult(tuple(names[j] for j in keep), beta, se, r2, n, G, dropped, dof)
