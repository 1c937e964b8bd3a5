"""Hessian (or negative Jacobian) as a matrix-free operator.

In dimer mode a product needs two field evaluations::

    hvp(x, v) = (G(x + L v) - G(x - L v)) / (2 L)

which is ``H(x) v`` for gradient systems and ``-J(x) v`` for non-gradient
ones under the internal sign convention.
"""

from __future__ import annotations

import logging
from functools import cached_property

import numpy as np

from .expr import CompiledVectorFn, Expr, differentiate
from .system import DEFAULT_DIMER_LENGTH, SystemSpec

log = logging.getLogger(__name__)

DENSE_WARN_DIM = 2000


def symbolic_hessian(e: Expr, dim: int) -> list[list[Expr]]:
    """Matrix of second partials; entry (i, j) differentiates by x_i then x_j."""
    first = [differentiate(e, i) for i in range(1, dim + 1)]
    return [[differentiate(first[i], j) for j in range(1, dim + 1)] for i in range(dim)]


class _CompiledMatrix:
    def __init__(self, entries: list[list[Expr]]):
        self.dim = len(entries)
        flat = [entry for row in entries for entry in row]
        self._fn = CompiledVectorFn(flat, max(self.dim, 1))

    def __call__(self, x) -> np.ndarray:
        return self._fn(x).reshape(self.dim, self.dim)


class HessianOperator:
    """Products with the Hessian-role matrix of ``spec`` at a point.

    ``mode="exact"`` needs a symbolic energy on the system; the matrix function
    is compiled on first use.
    """

    def __init__(self, spec: SystemSpec, mode: str = "dimer", length: float | None = None):
        if mode not in ("dimer", "exact"):
            raise ValueError(f"unknown Hessian mode {mode!r}")
        if mode == "exact" and spec.expr is None:
            raise ValueError("exact Hessian requires a symbolic energy")
        self.spec = spec
        self.mode = mode
        self.length = DEFAULT_DIMER_LENGTH if length is None else float(length)
        if not self.length > 0:
            raise ValueError("Hessian dimer length must be positive")

    @property
    def dim(self) -> int:
        return self.spec.dim

    @cached_property
    def exact_fn(self) -> _CompiledMatrix:
        return _CompiledMatrix(symbolic_hessian(self.spec.expr, self.spec.dim))

    def hvp(self, x, v) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        self.spec.counter.add_hvp()
        if self.mode == "exact":
            return self.exact_fn(x) @ v
        L = self.length
        G = self.spec.force
        return (G(x + L * v) - G(x - L * v)) / (2 * L)

    def batch_hvp(self, x, V) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        V = np.asarray(V, dtype=float).reshape(self.dim, -1)
        k = V.shape[1]
        if k == 0:
            return np.zeros((self.dim, 0))
        if self.mode == "exact":
            self.spec.counter.add_hvp(k)
            return self.exact_fn(x) @ V
        return np.column_stack([self.hvp(x, V[:, i]) for i in range(k)])

    def dense(self, x) -> np.ndarray:
        """Explicit ``d x d`` matrix; dimer mode applies the operator to the identity."""
        if self.mode == "exact":
            return self.exact_fn(np.asarray(x, dtype=float))
        if self.dim > DENSE_WARN_DIM:
            log.warning("reconstructing a dense %dx%d Hessian from dimer products is expensive", self.dim, self.dim)
        return self.batch_hvp(x, np.eye(self.dim))

    def with_length(self, length: float) -> "HessianOperator":
        return HessianOperator(self.spec, self.mode, length)


def hvp(op: HessianOperator, x, v) -> np.ndarray:
    return op.hvp(x, v)


def batch_hvp(op: HessianOperator, x, V) -> np.ndarray:
    return op.batch_hvp(x, V)


def dense_hessian(op: HessianOperator, x) -> np.ndarray:
    return op.dense(x)
