"""Dense linear-algebra kernels.

Matrices are plain 2-D ``numpy`` float arrays.  The symmetric eigensolver is
a cyclic Jacobi iteration and the linear solver a partial-pivot LU; both are
written out here so that their failure modes (non-convergence, singular
pivot) are reported in the terms used by the rest of the package.
"""
from dataclasses import dataclass

import numpy as np
from numba import njit

__all__ = [
    "ConvergenceError",
    "NotPSDError",
    "SingularMatrixError",
    "SymEig",
    "inverse",
    "lyapunov_solve",
    "mat_mul",
    "norm_inf",
    "operator_norm",
    "solve_linear",
    "spectral_radius",
    "sym_eig",
    "sym_sqrt",
]

PIVOT_THRESHOLD = 1e-12
SYMMETRY_TOL = 1e-10
JACOBI_MAX_SWEEPS = 100


class SingularMatrixError(ValueError):
    """Raised when LU elimination meets a pivot below the singularity threshold."""

    def __init__(self, pivot_index, message=None):
        self.pivot_index = pivot_index
        super().__init__(message or f"matrix is numerically singular at pivot {pivot_index}")


class ConvergenceError(RuntimeError):
    """An iterative kernel hit its iteration cap."""

    def __init__(self, message, iterations):
        self.iterations = iterations
        super().__init__(f"{message} (after {iterations} iterations)")


class NotPSDError(ValueError):
    pass


def _as_matrix(a, name="matrix"):
    arr = np.asarray(a, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def norm_inf(a):
    """Largest absolute entry (the entry-wise max norm)."""
    a = np.asarray(a, dtype=float)
    return float(np.max(np.abs(a))) if a.size else 0.0


def mat_mul(a, b):
    a = _as_matrix(a, "a")
    b = _as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"dimension mismatch: {a.shape} x {b.shape}")
    return a @ b


def solve_linear(a, b):
    """Solve ``a x = b`` by LU factorization with partial pivoting.

    ``b`` may be a vector or a matrix of right-hand sides; the result has the
    same shape.  Raises :class:`SingularMatrixError` when a pivot falls below
    ``1e-12 * norm_inf(a)``.
    """
    a = _as_matrix(a, "a").copy()
    b_arr = np.asarray(b, dtype=float)
    vector = b_arr.ndim == 1
    rhs = b_arr.reshape(-1, 1).copy() if vector else b_arr.copy()
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError(f"coefficient matrix must be square, got {a.shape}")
    if rhs.shape[0] != n:
        raise ValueError(f"right-hand side has {rhs.shape[0]} rows, expected {n}")
    threshold = PIVOT_THRESHOLD * norm_inf(a)
    for k in range(n):
        p = k + int(np.argmax(np.abs(a[k:, k])))
        if abs(a[p, k]) <= threshold:
            raise SingularMatrixError(k)
        if p != k:
            a[[k, p]] = a[[p, k]]
            rhs[[k, p]] = rhs[[p, k]]
        factors = a[k + 1:, k] / a[k, k]
        a[k + 1:, k + 1:] -= np.outer(factors, a[k, k + 1:])
        rhs[k + 1:] -= np.outer(factors, rhs[k])
    x = np.empty_like(rhs)
    for k in range(n - 1, -1, -1):
        x[k] = (rhs[k] - a[k, k + 1:] @ x[k + 1:]) / a[k, k]
    return x.ravel() if vector else x


def inverse(a):
    a = _as_matrix(a)
    return solve_linear(a, np.eye(a.shape[0]))


@dataclass(frozen=True)
class SymEig:
    """Eigenvalues sorted in descending order and matching orthonormal
    eigenvectors stored as columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


@njit(cache=True)
def _jacobi(a, max_sweeps):
    n = a.shape[0]
    a = a.copy()
    v = np.eye(n)
    scale = 0.0
    for i in range(n):
        for j in range(n):
            scale += a[i, j] * a[i, j]
    for sweep in range(max_sweeps):
        off = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                off += a[i, j] * a[i, j]
        if off <= 1e-32 * scale:
            return a, v, sweep
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
                for k in range(n):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = c * vkp - s * vkq
                    v[k, q] = s * vkp + c * vkq
    return a, v, -1


def sym_eig(s):
    """Symmetric eigendecomposition by cyclic Jacobi rotations."""
    s = _as_matrix(s, "s")
    n = s.shape[0]
    if s.shape != (n, n):
        raise ValueError(f"matrix must be square, got {s.shape}")
    if norm_inf(s - s.T) > SYMMETRY_TOL * max(1.0, norm_inf(s)):
        raise ValueError("matrix is not symmetric")
    sym = 0.5 * (s + s.T)
    diag, vecs, sweeps = _jacobi(sym, JACOBI_MAX_SWEEPS)
    if sweeps < 0:
        raise ConvergenceError("Jacobi eigensolver did not converge", JACOBI_MAX_SWEEPS)
    vals = np.diag(diag).copy()
    order = np.argsort(-vals, kind="stable")
    return SymEig(vals[order], vecs[:, order])


def sym_sqrt(s):
    """Symmetric square root of a positive semi-definite matrix.

    Eigenvalues in ``[-1e-10, 0)`` are treated as rounding noise and clamped
    to zero; anything more negative raises :class:`NotPSDError`.
    """
    eig = sym_eig(s)
    if eig.eigenvalues.size and eig.eigenvalues[-1] < -1e-10:
        raise NotPSDError(f"matrix has eigenvalue {eig.eigenvalues[-1]:.3e} < 0")
    root = np.sqrt(np.clip(eig.eigenvalues, 0.0, None))
    q = eig.eigenvectors
    r = (q * root) @ q.T
    return 0.5 * (r + r.T)


def operator_norm(a, tol=1e-10, max_iter=100_000):
    """Largest singular value by power iteration on ``a.T @ a``.

    The Rayleigh quotient is iterated until its relative change drops
    below ``tol``.
    """
    a = _as_matrix(a, "a")
    if not a.size or norm_inf(a) == 0.0:
        return 0.0
    v = np.random.default_rng(12345).standard_normal(a.shape[1])
    v /= np.linalg.norm(v)
    av = a @ v
    est = float(av @ av)
    for _ in range(max_iter):
        v = a.T @ av
        nv = np.linalg.norm(v)
        if nv == 0.0:
            return 0.0
        v /= nv
        av = a @ v
        new = float(av @ av)
        if abs(new - est) <= 0.01 * tol * new:
            return float(np.sqrt(new))
        est = new
    return float(np.sqrt(est))


def spectral_radius(f, max_doublings=48):
    """Spectral radius from Gelfand's formula ``lim ||f^k||^(1/k)``.

    Powers ``f^(2^j)`` are formed by repeated squaring with renormalization,
    so the estimate stays finite for unstable matrices.  The Frobenius norm
    is used for the powers; it converges to the same limit.
    """
    f = _as_matrix(f, "f")
    nrm = np.linalg.norm(f)
    if nrm == 0.0:
        return 0.0
    g = f / nrm
    log_norm = np.log(nrm)  # log ||f^k|| = k*log_scale + log ||g_k||
    k = 1
    est = nrm
    for _ in range(max_doublings):
        g = g @ g
        k *= 2
        log_norm *= 2.0
        gn = np.linalg.norm(g)
        if gn == 0.0:
            return 0.0
        log_norm += np.log(gn)
        g /= gn
        prev, est = est, float(np.exp(log_norm / k))
        # polynomial (Jordan) factors leave an error of order log(k)/k
        if abs(est - prev) <= 1e-15 * est:
            break
    return est


def lyapunov_solve(f, q, tol=1e-12, max_iter=64):
    """Solve the discrete Lyapunov equation ``S = f S f' + q`` by doubling.

    Iterates ``S <- S + F S F'``, ``F <- F @ F`` so that after ``k`` steps
    ``S`` holds the first ``2**k`` terms of ``sum_j f^j q f'^j``.  Failure to
    converge within ``max_iter`` doublings indicates an unstable ``f``.
    """
    f = _as_matrix(f, "f")
    q = _as_matrix(q, "q")
    n = f.shape[0]
    if f.shape != (n, n) or q.shape != (n, n):
        raise ValueError(f"incompatible shapes {f.shape} and {q.shape}")
    s = 0.5 * (q + q.T)
    fk = f.copy()
    for it in range(1, max_iter + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            upd = fk @ s @ fk.T
            s = s + upd
        if not np.all(np.isfinite(s)):
            raise ConvergenceError("Lyapunov doubling diverged; f is unstable", it)
        if norm_inf(upd) < tol:
            return 0.5 * (s + s.T)
        with np.errstate(over="ignore", invalid="ignore"):
            fk = fk @ fk
    raise ConvergenceError("Lyapunov doubling did not converge; f is unstable", max_iter)
