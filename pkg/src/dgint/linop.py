"""Sparse linear operators with a float backend and an exact rational backend.

Float application uses scipy CSR matrices.  Exact application works on numpy
object arrays of Fractions through a column-compressed table, so identities
between operators can be checked by exact equality.  Each operator may also
carry an overflow detector: a matrix whose product with the input is nonzero
exactly when the operator dropped monomials above the degree cap.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Callable

import numpy as np
import scipy.sparse as sp


class _Exact:
    """Column-compressed exact matrix: col -> (row indices, Fraction values)."""

    __slots__ = ("shape", "cols")

    def __init__(self, shape, cols: dict[int, tuple[np.ndarray, np.ndarray]]):
        self.shape = shape
        self.cols = cols

    @classmethod
    def from_entries(cls, shape, rows, cols, vals) -> "_Exact":
        acc: dict[int, dict[int, Fraction]] = {}
        for r, c, v in zip(rows, cols, vals):
            if v == 0:
                continue
            col = acc.setdefault(int(c), {})
            col[int(r)] = col.get(int(r), 0) + v
        return cls._from_acc(shape, acc)

    @classmethod
    def _from_acc(cls, shape, acc) -> "_Exact":
        out = {}
        for c, col in acc.items():
            items = [(r, v) for r, v in col.items() if v != 0]
            if items:
                items.sort()
                rows = np.array([r for r, _ in items], dtype=np.int64)
                vals = np.empty(len(items), dtype=object)
                vals[:] = [v for _, v in items]
                out[c] = (rows, vals)
        return cls(shape, out)

    def entries(self):
        for c, (rows, vals) in self.cols.items():
            for r, v in zip(rows, vals):
                yield int(r), c, v

    def to_csr(self) -> sp.csr_matrix:
        rows, cols, vals = [], [], []
        for r, c, v in self.entries():
            rows.append(r)
            cols.append(c)
            vals.append(float(v))
        return sp.csr_matrix((vals, (rows, cols)), shape=self.shape)

    def apply(self, x: np.ndarray) -> np.ndarray:
        """x has shape (B, ncols), object dtype."""
        out = np.zeros((x.shape[0], self.shape[0]), dtype=object)
        out[...] = 0
        nzcols = np.nonzero(np.any(x != 0, axis=0))[0]
        for c in nzcols:
            got = self.cols.get(int(c))
            if got is None:
                continue
            rows, vals = got
            xc = x[:, c : c + 1]
            out[:, rows] += xc * vals[None, :]
        return out

    def matmul(self, other: "_Exact") -> "_Exact":
        """self @ other."""
        acc: dict[int, dict[int, Fraction]] = {}
        for c, (rows_b, vals_b) in other.cols.items():
            col: dict[int, Fraction] = {}
            for k, vb in zip(rows_b, vals_b):
                got = self.cols.get(int(k))
                if got is None:
                    continue
                rows_a, vals_a = got
                for r, va in zip(rows_a, vals_a):
                    col[int(r)] = col.get(int(r), 0) + va * vb
            acc[c] = col
        return _Exact._from_acc((self.shape[0], other.shape[1]), acc)

    def add(self, other: "_Exact", scale=1) -> "_Exact":
        acc: dict[int, dict[int, Fraction]] = {}
        for src, s in ((self, 1), (other, scale)):
            for c, (rows, vals) in src.cols.items():
                col = acc.setdefault(c, {})
                for r, v in zip(rows, vals):
                    col[int(r)] = col.get(int(r), 0) + s * v
        return _Exact._from_acc(self.shape, acc)


class LinearOp:
    """Linear map between flattened coefficient spaces."""

    def __init__(self, shape, csr: sp.spmatrix, exact: _Exact | Callable[[], _Exact] | None, ov=None):
        self.shape = tuple(shape)
        self.csr = sp.csr_matrix(csr)
        self._exact = exact
        self.ov = None if ov is None or ov.shape[0] == 0 else sp.csr_matrix(ov)

    @classmethod
    def from_entries(cls, shape, rows, cols, vals, ov_entries=None) -> "LinearOp":
        ex = _Exact.from_entries(shape, rows, cols, vals)
        ov = None
        if ov_entries:
            orows, ocols = ov_entries
            if len(orows):
                nrow = max(orows) + 1
                ov = sp.csr_matrix((np.ones(len(orows)), (orows, ocols)), shape=(nrow, shape[1]))
        return cls(shape, ex.to_csr(), ex, ov)

    @classmethod
    def identity(cls, n: int) -> "LinearOp":
        return cls.from_entries((n, n), range(n), range(n), [Fraction(1)] * n)

    @classmethod
    def zero(cls, shape) -> "LinearOp":
        return cls(shape, sp.csr_matrix(shape), _Exact(shape, {}))

    @property
    def exact(self) -> _Exact:
        if callable(self._exact):
            self._exact = self._exact()
        if self._exact is None:
            raise ValueError("operator has no exact form")
        return self._exact

    def __matmul__(self, other: "LinearOp") -> "LinearOp":
        if self.shape[1] != other.shape[0]:
            raise ValueError(f"shape mismatch {self.shape} @ {other.shape}")
        csr = self.csr @ other.csr
        ovs = [m for m in (other.ov, None if self.ov is None else self.ov @ other.csr) if m is not None]
        ov = sp.vstack(ovs) if ovs else None
        a, b = self, other
        return LinearOp((self.shape[0], other.shape[1]), csr, lambda: a.exact.matmul(b.exact), ov)

    def __add__(self, other: "LinearOp") -> "LinearOp":
        return self._combine(other, 1)

    def __sub__(self, other: "LinearOp") -> "LinearOp":
        return self._combine(other, -1)

    def _combine(self, other, s):
        if self.shape != other.shape:
            raise ValueError("shape mismatch in operator sum")
        ovs = [m for m in (self.ov, other.ov) if m is not None]
        ov = sp.vstack(ovs) if ovs else None
        a, b = self, other
        return LinearOp(self.shape, self.csr + s * other.csr, lambda: a.exact.add(b.exact, s), ov)

    def apply(self, x: np.ndarray) -> tuple[np.ndarray, bool]:
        """Apply along the last axis; returns (result, truncated)."""
        lead = x.shape[:-1]
        flat = x.reshape(-1, x.shape[-1])
        if x.dtype == object:
            out = self.exact.apply(flat)
            fl = flat.astype(float) if self.ov is not None else None
        else:
            out = np.asarray((self.csr @ flat.T).T)
            fl = flat
        trunc = False
        if self.ov is not None:
            trunc = bool(np.any(self.ov @ fl.T != 0))
        return out.reshape(lead + (self.shape[0],)), trunc
