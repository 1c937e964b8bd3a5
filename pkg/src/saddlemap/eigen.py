"""Maintenance of the k-dimensional unstable subspace.

All spectra here belong to the Hessian-role operator (``H`` for gradient
systems, ``-J`` otherwise), so a negative eigenvalue always marks an unstable
direction.
"""

from __future__ import annotations

import itertools
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .hessian import DENSE_WARN_DIM, HessianOperator

log = logging.getLogger(__name__)

DEFAULT_PRECISION_TOL = 1e-5
COLLAPSE_TOL = 1e-12
CANON_DECIMALS = 12


class SubspaceWarning(UserWarning):
    pass


@dataclass
class SubspaceBasis:
    V: np.ndarray  # d x k, orthonormal columns
    rayleigh_diag: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def k(self) -> int:
        return self.V.shape[1]


@dataclass
class IndexReport:
    neg: int
    zero: int
    pos: int
    neg_vectors: np.ndarray
    eigenvalues: np.ndarray  # real parts, ascending

    @property
    def degenerate(self) -> bool:
        return self.zero > 0


def _random_unit_orthogonal(V: np.ndarray, d: int, rng) -> np.ndarray:
    for _ in range(100):
        w = rng.standard_normal(d)
        if V.shape[1]:
            w -= V @ (V.T @ w)
            w -= V @ (V.T @ w)
        n = np.linalg.norm(w)
        if n > 1e-8:
            return w / n
    raise np.linalg.LinAlgError("could not find an orthogonal direction")


def gram_schmidt(A: np.ndarray, rng=None) -> np.ndarray:
    """Modified Gram-Schmidt on the columns of ``A`` (two passes).

    A column that collapses (norm below 1e-12 after projection) is replaced by
    a random direction orthogonal to the ones already accepted.
    """
    A = np.array(A, dtype=float, copy=True)
    d, k = A.shape
    Q = np.zeros((d, k))
    for i in range(k):
        w = A[:, i]
        scale = np.linalg.norm(w)
        for _ in range(2):
            if i:
                w = w - Q[:, :i] @ (Q[:, :i].T @ w)
        n = np.linalg.norm(w)
        if not np.isfinite(n) or n < COLLAPSE_TOL * max(scale, 1.0) or n == 0.0:
            rng = rng if rng is not None else np.random.default_rng(0)
            warnings.warn("rank collapse during orthonormalization; column replaced", SubspaceWarning)
            w = _random_unit_orthogonal(Q[:, :i], d, rng)
            n = 1.0
        Q[:, i] = w / n
    return Q


def _as_basis(V) -> np.ndarray:
    V = np.asarray(V.V if isinstance(V, SubspaceBasis) else V, dtype=float)
    if V.ndim == 1:
        V = V.reshape(-1, 1)
    return V


def euler_update(
    op: HessianOperator,
    x,
    V,
    gamma: float,
    substeps: int = 1,
    is_gradient: bool | None = None,
    precision_tol: float = DEFAULT_PRECISION_TOL,
    rng=None,
) -> tuple[SubspaceBasis, bool]:
    """Explicit Euler step(s) of the subspace dynamics.

    Gradient systems follow the constrained Rayleigh-quotient flow with
    sequential Gram-Schmidt; non-gradient systems take ``v <- v + gamma J v``
    followed by a full Gram-Schmidt.  ``substeps`` splits ``gamma`` evenly.
    """
    V = _as_basis(V).copy()
    if is_gradient is None:
        is_gradient = op.spec.is_gradient
    d, k = V.shape
    if k == 0:
        return SubspaceBasis(V, np.zeros(0)), True
    h = gamma / substeps
    rayleigh = np.zeros(k)
    for _ in range(substeps):
        U = op.batch_hvp(x, V)
        rayleigh = np.einsum("ij,ij->j", V, U)
        if is_gradient:
            new = np.zeros_like(V)
            for i in range(k):
                u = U[:, i]
                di = -u + rayleigh[i] * V[:, i]
                if i:
                    di += 2.0 * V[:, :i] @ (V[:, :i].T @ u)
                w = V[:, i] + h * di
                new[:, : i + 1] = gram_schmidt(np.column_stack([new[:, :i], w]), rng) if i else gram_schmidt(w[:, None], rng)
            V = new
        else:
            V = gram_schmidt(V - h * U, rng)
    return SubspaceBasis(V, rayleigh), bool(np.all(rayleigh < precision_tol))


def power_update(
    op: HessianOperator,
    x,
    V,
    gamma: float,
    substeps: int = 1,
    precision_tol: float = DEFAULT_PRECISION_TOL,
    rng=None,
) -> tuple[SubspaceBasis, bool]:
    """Power-type step ``V <- orth(V + gamma J V)`` with QR re-orthonormalization."""
    V = _as_basis(V).copy()
    d, k = V.shape
    if k == 0:
        return SubspaceBasis(V, np.zeros(0)), True
    h = gamma / substeps
    rayleigh = np.zeros(k)
    for _ in range(substeps):
        U = op.batch_hvp(x, V)
        rayleigh = np.einsum("ij,ij->j", V, U)
        W = V - h * U
        Q, R = np.linalg.qr(W)
        diag = np.diag(R)
        if np.any(np.abs(diag) < COLLAPSE_TOL * max(1.0, np.abs(W).max())) or not np.all(np.isfinite(Q)):
            Q = gram_schmidt(W, rng)
        else:
            Q = Q * np.where(diag < 0, -1.0, 1.0)
        V = Q
    return SubspaceBasis(V, rayleigh), bool(np.all(rayleigh < precision_tol))


def _orthonormal_against(B: np.ndarray, X: np.ndarray, drop_tol: float = 1e-8) -> np.ndarray:
    """Orthonormal basis of span(B) minus span(X); near-dependent columns dropped."""
    if B.shape[1] == 0:
        return B
    for _ in range(2):
        B = B - X @ (X.T @ B)
    norms = np.linalg.norm(B, axis=0)
    keep = norms > 0
    B = B[:, keep] / norms[keep]
    if B.shape[1] == 0:
        return B
    U, s, _ = np.linalg.svd(B, full_matrices=False)
    U = U[:, s > drop_tol]
    for _ in range(2):
        U = U - X @ (X.T @ U)
    Q, _ = np.linalg.qr(U)
    return Q


def lobpcg_smallest(
    op: HessianOperator,
    x,
    V_guess,
    max_iter: int = 10,
    step_tol: float = 1e-8,
    precision_tol: float = DEFAULT_PRECISION_TOL,
    rng=None,
) -> tuple[SubspaceBasis, bool]:
    """Unpreconditioned block LOBPCG for the ``k`` algebraically smallest
    eigenpairs of the (symmetric) operator, warm-started from ``V_guess``.

    Returns the Ritz basis with eigenvalues in ascending order.  Iteration
    stops once every residual norm drops below ``step_tol``.
    """
    if not op.spec.is_gradient:
        raise ValueError("LOBPCG requires a symmetric operator (gradient system)")
    X = _as_basis(V_guess).copy()
    d, k = X.shape
    if k == 0:
        return SubspaceBasis(X, np.zeros(0)), True
    try:
        X = gram_schmidt(X, rng)
        AX = op.batch_hvp(x, X)
        lam, C = np.linalg.eigh(0.5 * (X.T @ AX + AX.T @ X))
        X, AX = X @ C, AX @ C
        P = np.zeros((d, 0))
        for _ in range(max_iter):
            R = AX - X * lam
            if np.max(np.linalg.norm(R, axis=0)) < step_tol:
                break
            Q = _orthonormal_against(np.column_stack([R, P]), X)
            if Q.shape[1] == 0:
                break
            AQ = op.batch_hvp(x, Q)
            S = np.column_stack([X, Q])
            AS = np.column_stack([AX, AQ])
            gram = S.T @ AS
            theta, C = np.linalg.eigh(0.5 * (gram + gram.T))
            C = C[:, :k]
            lam = theta[:k]
            X = S @ C
            AX = AS @ C
            P = Q @ C[k:, :]
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(lam))):
            raise np.linalg.LinAlgError("non-finite Ritz values")
    except np.linalg.LinAlgError as exc:
        warnings.warn(f"LOBPCG Rayleigh-Ritz breakdown ({exc}); falling back to an Euler step", SubspaceWarning)
        return euler_update(op, x, V_guess, 0.1, 1, True, precision_tol, rng)
    X = gram_schmidt(X, rng)
    return SubspaceBasis(X, lam), bool(lam[-1] < precision_tol)


def _spectrum(op: HessianOperator, x):
    """Dense eigen-decomposition; eigenvalue real parts sorted ascending."""
    M = op.dense(x)
    if op.spec.is_gradient:
        vals, vecs = np.linalg.eigh(0.5 * (M + M.T))
        return vals, vecs, True
    vals, vecs = np.linalg.eig(M)
    order = np.lexsort((vals.imag, vals.real))
    return vals[order], vecs[:, order], False


def check_index_k(op: HessianOperator, x, k: int, precision_tol: float = DEFAULT_PRECISION_TOL) -> bool:
    """True iff at least ``k`` eigenvalue real parts are below ``precision_tol``."""
    if k <= 0:
        return True
    if op.dim > DENSE_WARN_DIM and op.spec.is_gradient:
        rng = np.random.default_rng(0)
        V0 = gram_schmidt(rng.standard_normal((op.dim, k)), rng)
        basis, _ = lobpcg_smallest(op, x, V0, max_iter=500, step_tol=1e-10, precision_tol=precision_tol)
        return bool(np.sum(basis.rayleigh_diag < precision_tol) >= k)
    vals, _, _ = _spectrum(op, x)
    return bool(np.sum(vals.real < precision_tol) >= k)


def find_index(
    op: HessianOperator,
    x,
    precision_tol: float = DEFAULT_PRECISION_TOL,
    canonical: bool = False,
) -> IndexReport:
    """Classify the full spectrum at ``x`` by sign of the real part.

    ``neg_vectors`` is a real orthonormal basis of the unstable subspace,
    columns ordered from most unstable; complex pairs contribute their real
    and imaginary parts.
    """
    vals, vecs, symmetric = _spectrum(op, x)
    re = vals.real
    neg_mask = re < -precision_tol
    zero = int(np.sum(np.abs(re) <= precision_tol))
    neg = int(np.sum(neg_mask))
    pos = int(re.shape[0] - neg - zero)
    if symmetric:
        B = vecs[:, neg_mask]
        lam = re[neg_mask]
    else:
        cols, lam_list = [], []
        idx = np.flatnonzero(neg_mask)
        seen = set()
        for i in idx:
            if i in seen:
                continue
            seen.add(i)
            if abs(vals[i].imag) > 1e-12:
                # partner conjugate is adjacent after the lexsort
                partner = next((j for j in idx if j not in seen and np.isclose(vals[j], np.conj(vals[i]))), None)
                if partner is not None:
                    seen.add(partner)
                cols += [vecs[:, i].real, vecs[:, i].imag]
                lam_list += [re[i], re[i]]
            else:
                cols.append(vecs[:, i].real)
                lam_list.append(re[i])
        B = np.column_stack(cols)[:, :neg] if cols else np.zeros((op.dim, 0))
        lam = np.array(lam_list[:neg])
        B = gram_schmidt(B) if B.shape[1] else B
    if canonical and B.shape[1]:
        blocks = group_eigenpairs(lam, B, precision_tol)
        B = np.column_stack([blk for _, blk in canonicalize_eigens(blocks)])
    return IndexReport(neg, zero, pos, np.ascontiguousarray(B), re)


def give_initial_eigenvectors(op: HessianOperator, x, k: int, rng=None, canonical: bool = False) -> SubspaceBasis:
    """Eigenvectors of the symmetrized operator for its ``k`` smallest eigenvalues."""
    d = op.dim
    if k <= 0:
        return SubspaceBasis(np.zeros((d, 0)), np.zeros(0))
    if d > DENSE_WARN_DIM:
        rng = rng if rng is not None else np.random.default_rng(0)
        return SubspaceBasis(gram_schmidt(rng.standard_normal((d, k)), rng), np.zeros(k))
    M = op.dense(x)
    vals, vecs = np.linalg.eigh(0.5 * (M + M.T))
    V, lam = vecs[:, :k], vals[:k]
    if canonical:
        V = np.column_stack([blk for _, blk in canonicalize_eigens(group_eigenpairs(lam, V, DEFAULT_PRECISION_TOL))])
    return SubspaceBasis(gram_schmidt(V), lam)


def group_eigenpairs(values, vectors, tol: float) -> list[tuple[float, np.ndarray]]:
    """Split columns into blocks of (near-)equal eigenvalue; input sorted ascending."""
    values = np.asarray(values, dtype=float)
    blocks = []
    start = 0
    for i in range(1, len(values) + 1):
        if i == len(values) or values[i] - values[i - 1] > tol:
            blocks.append((float(np.mean(values[start:i])), vectors[:, start:i]))
            start = i
    return blocks


def _rref(A: np.ndarray, tol: float) -> tuple[np.ndarray, int]:
    A = A.copy()
    rows, cols = A.shape
    r = 0
    for c in range(cols):
        if r == rows:
            break
        p = r + int(np.argmax(np.abs(A[r:, c])))
        if abs(A[p, c]) <= tol:
            A[r:, c] = 0.0
            continue
        A[[r, p]] = A[[p, r]]
        A[r] /= A[r, c]
        for i in range(rows):
            if i != r:
                A[i] -= A[i, c] * A[r]
        A[:, c] = 0.0
        A[r, c] = 1.0
        r += 1
    return A, r


def canonicalize_matrix(B: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Deterministic orthonormal basis for span(B).

    Row-reduce ``B^T`` to reduced row echelon form (rounded to 12 decimals so
    that bases of one subspace produce the same echelon form), Gram-Schmidt the
    rows, and flip each vector so its first nonzero entry is positive.
    """
    B = np.asarray(B, dtype=float)
    d, m = B.shape
    if m == 0:
        return B.copy()
    R, rank = _rref(B.T, tol)
    if rank < m:
        raise ValueError(f"rank-deficient eigenblock ({rank} < {m}); inconsistent multiplicity grouping")
    R = np.round(R[:m], CANON_DECIMALS) + 0.0
    Q = np.zeros((d, m))
    for i in range(m):
        w = R[i].copy()
        for j in range(i):
            w -= (Q[:, j] @ w) * Q[:, j]
        Q[:, i] = w / np.linalg.norm(w)
    for i in range(m):
        nz = np.flatnonzero(np.abs(Q[:, i]) > 1e-10)
        if nz.size and Q[nz[0], i] < 0:
            Q[:, i] = -Q[:, i]
    return Q


def canonicalize_eigens(blocks) -> list[tuple[float, np.ndarray]]:
    """Canonicalize each ``(eigenvalue, d x m block)`` pair independently."""
    return [(val, canonicalize_matrix(np.asarray(blk, dtype=float).reshape(np.shape(blk)[0], -1))) for val, blk in blocks]


def column_combinations(k: int, j: int, mode: str = "all"):
    """Index tuples choosing ``j`` of ``k`` columns; ``"min"`` keeps the first."""
    combos = itertools.combinations(range(k), j)
    if mode == "min":
        return [next(combos)]
    return list(combos)
