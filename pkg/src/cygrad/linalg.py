"""Vectors, SPD operators and the inner-product kernels.

Every reduction here runs left-to-right in a single accumulator so that a
solve is bit-reproducible. The parallel simulator is the only place that
regroups sums, and it does so on purpose.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

SYMMETRY_RTOL = 1e-12


class DimensionError(ValueError):
    pass


class NumericalBreakdown(ArithmeticError):
    """A non-finite or non-positive quantity appeared where SPD math forbids it."""


class ZeroGradient(Exception):
    """Raised when a steplength is requested for an exactly zero gradient."""


def as_vector(values, copy: bool = True) -> np.ndarray:
    """Return a read-only float64 1-D array after checking that it is finite."""
    v = np.array(values, dtype=np.float64, copy=copy)
    if v.ndim != 1 or v.size == 0:
        raise DimensionError(f"expected a non-empty 1-D vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector has non-finite entries")
    v.flags.writeable = False
    return v


@njit(cache=True)
def _dot_seq(u, v):
    s = 0.0
    for i in range(u.shape[0]):
        s += u[i] * v[i]
    return s


@njit(cache=True)
def _csr_rows(indptr, indices, data, x, start, stop):
    out = np.empty(stop - start)
    for i in range(start, stop):
        s = 0.0
        for jj in range(indptr[i], indptr[i + 1]):
            s += data[jj] * x[indices[jj]]
        out[i - start] = s
    return out


def dot(u: np.ndarray, v: np.ndarray) -> float:
    """Sequential left-to-right sum of ``u[i] * v[i]``.

    The products commute exactly, so ``dot(u, v) == dot(v, u)`` bit for bit.
    """
    if u.shape != v.shape:
        raise DimensionError(f"length mismatch: {u.shape[0]} vs {v.shape[0]}")
    return float(_dot_seq(u, v))


@dataclass(frozen=True)
class SpectrumInfo:
    lambda_min: float
    lambda_max: float
    exact: bool
    # sorted eigenvalues, only carried when exact
    eigenvalues: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not (0 < self.lambda_min <= self.lambda_max):
            raise ValueError(
                f"need 0 < lambda_min <= lambda_max, got {self.lambda_min}, {self.lambda_max}"
            )


class SpdOperator:
    """Base class for the symmetric positive definite matrix ``A``."""

    n: int

    def matvec(self, x: np.ndarray) -> np.ndarray:
        self._check(x)
        return self._rows(x, 0, self.n)

    def matvec_rows(self, x: np.ndarray, start: int, stop: int) -> np.ndarray:
        """Rows ``start:stop`` of ``A @ x``; concatenating blocks equals ``matvec``."""
        self._check(x)
        if not 0 <= start <= stop <= self.n:
            raise DimensionError(f"row range [{start}, {stop}) outside 0..{self.n}")
        return self._rows(x, start, stop)

    def _check(self, x):
        if x.ndim != 1 or x.shape[0] != self.n:
            raise DimensionError(f"operator is {self.n}x{self.n}, vector has shape {x.shape}")

    def _rows(self, x, start, stop):
        raise NotImplementedError

    def to_dense(self) -> np.ndarray:
        raise NotImplementedError

    def diagonal(self) -> np.ndarray:
        raise NotImplementedError

    def spectrum(self) -> SpectrumInfo:
        raise NotImplementedError


class DiagonalOperator(SpdOperator):
    def __init__(self, values):
        lam = as_vector(values)
        if np.any(lam <= 0):
            raise ValueError("diagonal operator needs strictly positive entries")
        self.values = lam
        self.n = lam.shape[0]

    def _rows(self, x, start, stop):
        return self.values[start:stop] * x[start:stop]

    def to_dense(self):
        return np.diag(self.values)

    def diagonal(self):
        return self.values

    def spectrum(self):
        ev = np.sort(self.values)
        return SpectrumInfo(float(ev[0]), float(ev[-1]), True, ev)

    def __repr__(self):
        return f"DiagonalOperator(n={self.n})"


class CsrOperator(SpdOperator):
    """Symmetric matrix in compressed sparse row storage.

    Symmetry is checked at construction. Positive definiteness is the
    caller's obligation; only the diagonal is inspected, and with
    ``strict_diagonal=False`` a nonpositive diagonal is recorded in
    ``warnings`` instead of raising.
    """

    def __init__(self, n, indptr, indices, data, strict_diagonal: bool = True):
        self.n = int(n)
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int64)
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.warnings: list[str] = []
        for a in (self.indptr, self.indices, self.data):
            a.flags.writeable = False
        self._validate(strict_diagonal)

    @classmethod
    def from_coo(cls, n, rows, cols, vals, strict_diagonal=True):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, rows + 1, 1)
        return cls(n, np.cumsum(indptr), cols, vals, strict_diagonal)

    @classmethod
    def from_dense(cls, a, strict_diagonal=True):
        a = np.asarray(a, dtype=np.float64)
        rows, cols = np.nonzero(a)
        return cls.from_coo(a.shape[0], rows, cols, a[rows, cols], strict_diagonal)

    def _validate(self, strict_diagonal):
        n, ip, ix, v = self.n, self.indptr, self.indices, self.data
        if n < 1 or ip.shape != (n + 1,) or ip[0] != 0 or ip[-1] != ix.size or ix.size != v.size:
            raise ValueError("inconsistent CSR arrays")
        if np.any(np.diff(ip) < 0):
            raise ValueError("row offsets must be nondecreasing")
        if ix.size and (ix.min() < 0 or ix.max() >= n):
            raise ValueError("column index out of range")
        if not np.all(np.isfinite(v)):
            raise ValueError("CSR values must be finite")
        rows = np.repeat(np.arange(n), np.diff(ip))
        same_row = rows[1:] == rows[:-1]
        if np.any(ix[1:][same_row] <= ix[:-1][same_row]):
            raise ValueError("column indices must be strictly increasing within each row")

        # symmetric iff the transpose, sorted the same way, is the same pattern
        t = np.lexsort((rows, ix))
        if not (np.array_equal(ix[t], rows) and np.array_equal(rows[t], ix)):
            raise ValueError("CSR matrix is structurally nonsymmetric")
        vt = v[t]
        if np.any(np.abs(v - vt) > SYMMETRY_RTOL * np.maximum(np.abs(v), np.abs(vt))):
            raise ValueError("CSR matrix is numerically nonsymmetric")

        d = self.diagonal()
        if np.any(d <= 0):
            msg = f"{int(np.sum(d <= 0))} nonpositive diagonal entries; matrix is not SPD"
            if strict_diagonal:
                raise ValueError(msg)
            self.warnings.append(msg)

    @property
    def nnz(self) -> int:
        return int(self.data.size)

    def _rows(self, x, start, stop):
        return _csr_rows(self.indptr, self.indices, self.data, x, start, stop)

    def diagonal(self):
        d = np.zeros(self.n)
        for i in range(self.n):
            lo, hi = self.indptr[i], self.indptr[i + 1]
            k = lo + np.searchsorted(self.indices[lo:hi], i)
            if k < hi and self.indices[k] == i:
                d[i] = self.data[k]
        return d

    def to_dense(self):
        a = np.zeros((self.n, self.n))
        rows = np.repeat(np.arange(self.n), np.diff(self.indptr))
        a[rows, self.indices] = self.data
        return a

    def spectrum(self):
        # estimate only: dense for small n, Lanczos otherwise
        if self.n <= 2000:
            ev = np.linalg.eigvalsh(self.to_dense())
            lo, hi = float(ev[0]), float(ev[-1])
        else:
            import scipy.sparse as sp
            from scipy.sparse.linalg import eigsh

            m = sp.csr_matrix((self.data, self.indices, self.indptr), shape=(self.n, self.n))
            hi = float(eigsh(m, k=1, which="LA", return_eigenvectors=False)[0])
            lo = float(eigsh(m, k=1, sigma=0, which="LM", return_eigenvectors=False)[0])
        if lo <= 0:
            raise NumericalBreakdown(f"operator has nonpositive eigenvalue {lo:g}")
        return SpectrumInfo(lo, hi, False)

    def __repr__(self):
        return f"CsrOperator(n={self.n}, nnz={self.nnz})"


def matvec(A: SpdOperator, x: np.ndarray) -> np.ndarray:
    return A.matvec(x)


def power_apply(A: SpdOperator, g: np.ndarray, rho: int) -> np.ndarray:
    """``A**rho @ g`` by ``rho`` successive products; ``rho=0`` returns ``g`` itself."""
    if rho < 0:
        raise ValueError(f"rho must be nonnegative, got {rho}")
    w = g
    for _ in range(rho):
        w = A.matvec(w)
    return w


def rayleigh_step(A: SpdOperator, g: np.ndarray, rho: int = 0) -> float:
    """Steplength ``(g' A^rho g) / (g' A^(rho+1) g)``.

    For SPD ``A`` the value lies in ``[1/lambda_max, 1/lambda_min]``.
    """
    w = power_apply(A, g, rho)
    num = dot(g, w)
    if num == 0.0 and not np.any(g):
        raise ZeroGradient("steplength requested for a zero gradient")
    den = dot(g, A.matvec(w))
    return finite_ratio(num, den)


def finite_ratio(num: float, den: float) -> float:
    alpha = num / den if den != 0.0 else np.inf
    if not np.isfinite(alpha) or alpha <= 0:
        raise NumericalBreakdown(f"steplength {num!r}/{den!r} is not finite and positive")
    return float(alpha)
