"""From a cone partition to abundances and endmembers.

Signed distances to each region give an (m, n) distance matrix ``D``. A change
of basis onto per-class reference columns, a saturation scale ``s`` and a
column-wise simplex projection turn it into initial abundances. Ridge
pseudo-inverses then recover endmembers and final abundances from the raw
observations.
"""
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .cluster import ClassificationMap
from .errors import ConvergenceError, DegenerateError
from .geometry import project_columns_onto_simplex, signed_distances

COND_LIMIT = 1e10
AUTO_LAMBDA_FACTOR = 1e-8


@dataclass
class DistanceMatrix:
    values: np.ndarray        # (m, n) signed distances D
    basis: np.ndarray         # (m, m) reference columns B
    reference: np.ndarray     # (m,) pixel index behind each reference column
    transformed: np.ndarray   # (m, n) B^-1 D


@dataclass
class UnmixResult:
    endmembers: np.ndarray          # (d, m)
    abundances: np.ndarray          # (m, n)
    initial_abundances: np.ndarray  # (m, n), columns on the simplex
    saturation: float
    lam_endmembers: float
    lam_abundances: float
    distances: DistanceMatrix = None


def compute_distance_matrix(partition, data):
    X = np.asarray(data, dtype=np.float64)
    D = np.empty((partition.m, X.shape[0]))
    for c, cone in enumerate(partition.regions):
        try:
            D[c] = signed_distances(cone, X)
        except ConvergenceError as exc:
            raise ConvergenceError(f"region {c}: {exc}", exc.residual) from None
    return D


def _labels_array(labels):
    return labels.labels if isinstance(labels, ClassificationMap) else np.asarray(labels, np.int64)


def select_reference_basis(D, labels, cell_class=None):
    """Column of ``D`` with the most negative own-class distance, per class.

    When ``cell_class`` is given, candidates are first restricted to pixels whose
    partition cell agrees with their label; a class with no such pixel falls
    back to its labelled pixels.

    Returns
    -------
    B : ndarray, shape (m, m)
    reference : ndarray of int, shape (m,)
    """
    D = np.asarray(D, dtype=np.float64)
    lab = _labels_array(labels)
    m = D.shape[0]
    ref = np.empty(m, dtype=np.int64)
    for c in range(m):
        cand = np.flatnonzero(lab == c)
        if cand.size == 0:
            raise DegenerateError(f"class {c} has no pixels to pick a reference from")
        if cell_class is not None:
            agree = cand[np.asarray(cell_class)[cand] == c]
            if agree.size:
                cand = agree
        ref[c] = cand[np.argmin(D[c, cand])]
    return D[:, ref].copy(), ref


def change_of_basis(D, B, cond_limit=COND_LIMIT, tikhonov_fallback=False):
    """``B^-1 D`` by an LU solve; refuses (or regularizes) ill-conditioned ``B``."""
    B = np.asarray(B, dtype=np.float64)
    cond = np.linalg.cond(B)
    if not cond <= cond_limit:
        if not tikhonov_fallback:
            raise DegenerateError(
                f"ill-conditioned reference basis (cond={cond:.3g} > {cond_limit:.3g}); "
                "enable the Tikhonov fallback (B^T B + eps I)^-1 B^T"
            )
        G = B.T @ B
        eps = AUTO_LAMBDA_FACTOR * np.trace(G) / B.shape[0]
        return np.linalg.solve(G + eps * np.eye(B.shape[0]), B.T @ D)
    return np.linalg.solve(B, D)


def saturation_default(D_prime):
    """``1 / (2 * std(D'))``, population std over every entry."""
    D_prime = np.asarray(D_prime, dtype=np.float64)
    if D_prime.size < 2:
        raise DegenerateError("degenerate distance spread: need at least two entries")
    std = float(np.std(D_prime))
    if not std > 0.0:
        raise DegenerateError("degenerate distance spread: D' is constant")
    return 1.0 / (2.0 * std)


def initial_abundances(D_prime, s):
    if not s > 0:
        raise ValueError(f"saturation must be positive, got {s}")
    return project_columns_onto_simplex(s * np.asarray(D_prime, dtype=np.float64))


def resolve_lambda(gram, lam=None):
    """``lam`` as given, or for ``None``: 0 unless cond(gram) > 1e10, then 1e-8 * trace / m."""
    if lam is not None:
        if lam < 0:
            raise ValueError(f"lambda must be nonnegative, got {lam}")
        return float(lam)
    if np.linalg.cond(gram) > COND_LIMIT:
        return AUTO_LAMBDA_FACTOR * float(np.trace(gram)) / gram.shape[0]
    return 0.0


def _ridge_solve(G, R, lam):
    # (G + lam I)^-1 R for symmetric PSD G
    try:
        factor = cho_factor(G + lam * np.eye(G.shape[0]))
    except LinAlgError:
        raise DegenerateError(f"singular normal equations at lambda={lam}; use lambda > 0") from None
    return cho_solve(factor, R)


def recover_endmembers(Y, A_init, lam=None):
    """``Y A^T (A A^T + lam I)^-1``, the minimizer of ``|Y - M A|_F^2 + lam |M|_F^2``.

    ``Y`` is (d, n), ``A_init`` is (m, n). Returns ``(M, lam_used)``.
    """
    Y = np.asarray(Y, dtype=np.float64)
    A = np.asarray(A_init, dtype=np.float64)
    G = A @ A.T
    lam = resolve_lambda(G, lam)
    return _ridge_solve(G, A @ Y.T, lam).T, lam


def recover_abundances(Y, M_hat, lam=None, simplex=False):
    """``(M^T M + lam I)^-1 M^T Y``, the minimizer of ``|Y - M A|_F^2 + lam |A|_F^2``.

    Columns are unconstrained unless ``simplex`` asks for a post-hoc projection.
    Returns ``(A, lam_used)``.
    """
    Y = np.asarray(Y, dtype=np.float64)
    M = np.asarray(M_hat, dtype=np.float64)
    G = M.T @ M
    lam = resolve_lambda(G, lam)
    A = _ridge_solve(G, M.T @ Y, lam)
    if simplex:
        A = project_columns_onto_simplex(A)
    return A, lam


def dominant_labels(A):
    """Per-column argmax (lowest index on ties)."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    return ClassificationMap(A.argmax(0), A.shape[0])


def unmix_from_partition(partition, reduced, Y, labels, saturation=None,
                         lam=None, tikhonov_fallback=False, simplex_abundances=False):
    """Both unmixing stages for pixels ``reduced`` (n, d') and raw ``Y`` (d, n)."""
    D = compute_distance_matrix(partition, reduced)
    B, ref = select_reference_basis(D, labels, partition.cell_class)
    D_prime = change_of_basis(D, B, tikhonov_fallback=tikhonov_fallback)
    s = saturation_default(D_prime) if saturation is None else float(saturation)
    A_init = initial_abundances(D_prime, s)
    M, lam_m = recover_endmembers(Y, A_init, lam)
    A, lam_a = recover_abundances(Y, M, lam, simplex=simplex_abundances)
    return UnmixResult(M, A, A_init, s, lam_m, lam_a, DistanceMatrix(D, B, ref, D_prime))
