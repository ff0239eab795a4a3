"""Coefficient matrices used in the simulation study, and the local
alternatives built from them."""
import warnings

import numpy as np

from .linalg import sym_eig
from .model import VarModel

NORM_TARGET = 0.75
STATIONARITY_GUARD = 0.98
MAX_HALVINGS = 20
PATTERN_RETRIES = 100


class PatternError(RuntimeError):
    pass


def gen_block_A(M):
    """Block diagonal with 2x2 blocks ``[[1/4, 1/2], [1/2, 1/4]]``."""
    if M < 2 or M % 2:
        raise ValueError(f"block graph needs an even M >= 2, got {M}")
    a = np.zeros((M, M))
    for i in range(0, M, 2):
        a[i:i + 2, i:i + 2] = [[0.25, 0.5], [0.5, 0.25]]
    return a


def gen_chain_A(M, norm_target=NORM_TARGET):
    """Chain graph: ``c`` at (0, 0) and on both off-diagonals.

    The operator norm is linear in ``c`` so the constant is obtained by one
    exact rescaling of the unit pattern.
    """
    if M < 2:
        raise ValueError(f"chain graph needs M >= 2, got {M}")
    pattern = np.zeros((M, M))
    pattern[0, 0] = 1.0
    idx = np.arange(M - 1)
    pattern[idx, idx + 1] = 1.0
    pattern[idx + 1, idx] = 1.0
    # symmetric, so the norm is the largest |eigenvalue|
    lam = sym_eig(pattern).eigenvalues
    return pattern * (norm_target / np.abs(lam).max())


def _symmetric_pattern(M, rho, rng):
    """Undirected edge set with ``rho * M // 2`` edges and degrees <= ``rho``.

    Edges are drawn one at a time uniformly from the pairs whose endpoints
    both have spare degree; ``None`` when the draw gets stuck.
    """
    n_edges = rho * M // 2
    deg = np.zeros(M, dtype=int)
    adj = np.zeros((M, M), dtype=bool)
    iu, ju = np.triu_indices(M, 1)
    for _ in range(n_edges):
        ok = (deg[iu] < rho) & (deg[ju] < rho) & ~adj[iu, ju]
        cand = np.flatnonzero(ok)
        if cand.size == 0:
            return None
        k = cand[rng.integers(cand.size)]
        i, j = iu[k], ju[k]
        adj[i, j] = adj[j, i] = True
        deg[i] += 1
        deg[j] += 1
    return adj


def gen_random_symmetric_A(M, rho=2, norm_target=NORM_TARGET, seed=0):
    """Random symmetric sparse matrix with at most ``rho`` nonzeros per row,
    scaled so that its largest |eigenvalue| equals ``norm_target``."""
    if rho < 1 or rho >= M:
        raise ValueError(f"need 1 <= rho < M, got rho={rho}, M={M}")
    rng = np.random.default_rng(seed)
    for _ in range(PATTERN_RETRIES):
        adj = _symmetric_pattern(M, rho, rng)
        if adj is not None:
            break
    else:
        raise PatternError(f"no symmetric pattern with rho={rho}, M={M} after {PATTERN_RETRIES} tries")
    iu, ju = np.nonzero(np.triu(adj, 1))
    a = np.zeros((M, M))
    vals = rng.uniform(-1.0, 1.0, iu.size)
    a[iu, ju] = vals
    a[ju, iu] = vals
    lam = np.abs(sym_eig(a).eigenvalues).max()
    if lam == 0.0:
        raise PatternError("generated matrix is zero")
    return a * (norm_target / lam)


def perturb(A, spec, delta, phi, T, p=1, guard=STATIONARITY_GUARD):
    """Local alternative ``A_D <- A_D + T^-phi delta``.

    Returns ``(A', delta_used, halvings)``.  When the perturbed companion
    matrix has spectral radius above ``guard`` the direction is halved, up
    to ``MAX_HALVINGS`` times.
    """
    A = np.asarray(A, dtype=float)
    delta = np.asarray(delta, dtype=float)
    if delta.shape != (spec.d,):
        raise ValueError(f"delta must have length {spec.d}")
    spec.validate(A.shape[0], p)
    scale = float(T) ** (-phi)
    rows = np.array([m for m, c in spec.pairs()])
    cols = np.array([c for m, c in spec.pairs()])
    for halvings in range(MAX_HALVINGS + 1):
        out = A.copy()
        out[rows, cols] += scale * delta
        if VarModel.from_stacked(out, p).spectral_radius() <= guard:
            if halvings:
                warnings.warn(f"alternative direction halved {halvings} times to keep the "
                              f"model stationary", RuntimeWarning, stacklevel=2)
            return out, delta, halvings
        delta = 0.5 * delta
    raise ValueError(f"perturbed model stays nonstationary after {MAX_HALVINGS} halvings")


def apply_alternative(A, spec, delta, phi, T, p=1):
    """Perturbed coefficient matrix; see :func:`perturb`."""
    return perturb(A, spec, delta, phi, T, p)[0]


def make_graph(kind, M, rho=2, norm_target=NORM_TARGET, seed=0):
    if kind == "block":
        return gen_block_A(M)
    if kind == "chain":
        return gen_chain_A(M, norm_target)
    if kind == "random":
        return gen_random_symmetric_A(M, rho, norm_target, seed)
    raise ValueError(f"unknown graph kind {kind!r}")


def row_sparsity(A):
    return int(np.count_nonzero(A, axis=1).max())
