"""Convex-geometry kernels: halfspaces, polyhedral cones, nearest points,
signed distances and Euclidean projection onto the probability simplex.
"""
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DegenerateError

NORMAL_EPS = 1e-12
DYKSTRA_TOL = 1e-10
DYKSTRA_MAX_ITER = 10_000


@dataclass
class Halfspace:
    """``{x : <x, normal> <= offset}``, stored with a unit normal."""

    normal: np.ndarray
    offset: float = 0.0

    def __post_init__(self):
        w = np.asarray(self.normal, dtype=np.float64).ravel()
        norm = np.linalg.norm(w)
        if not norm > NORMAL_EPS:
            raise DegenerateError("halfspace normal must be nonzero")
        self.normal = w / norm
        self.offset = float(self.offset) / norm


class PolyhedralCone:
    """Intersection of halfspaces ``<x, w_i> <= 0`` with unit normals ``w_i``."""

    def __init__(self, normals):
        W = np.atleast_2d(np.asarray(normals, dtype=np.float64))
        norms = np.linalg.norm(W, axis=1)
        if W.shape[0] == 0 or not (norms > NORMAL_EPS).all():
            raise DegenerateError("cone needs at least one nonzero normal")
        self.normals = W / norms[:, None]

    @classmethod
    def from_halfspaces(cls, halfspaces):
        if any(h.offset != 0.0 for h in halfspaces):
            raise ValueError("cone halfspaces must pass through the origin")
        return cls([h.normal for h in halfspaces])

    @property
    def dim(self):
        return self.normals.shape[1]

    @property
    def halfspaces(self):
        return [Halfspace(w, 0.0) for w in self.normals]

    def margins(self, X):
        """``<x, w_i>`` for every point/halfspace pair, shape (..., n_halfspaces)."""
        return np.asarray(X, dtype=np.float64) @ self.normals.T

    def __repr__(self):
        return f"PolyhedralCone(dim={self.dim}, halfspaces={len(self.normals)})"


def _check_dim(cone, X):
    if X.shape[-1] != cone.dim:
        raise ValueError(f"point has dimension {X.shape[-1]}, cone lives in R^{cone.dim}")


def contains(cone, x, tol=0.0):
    x = np.asarray(x, dtype=np.float64)
    _check_dim(cone, x)
    return (cone.margins(x) <= tol).all(-1)


def _as_constraints(halfspaces):
    if isinstance(halfspaces, PolyhedralCone):
        return halfspaces.normals, np.zeros(len(halfspaces.normals))
    if isinstance(halfspaces, tuple) and len(halfspaces) == 2:
        W, b = (np.asarray(a, dtype=np.float64) for a in halfspaces)
        norms = np.linalg.norm(W, axis=1)
        return W / norms[:, None], b / norms
    hs = list(halfspaces)
    return np.array([h.normal for h in hs]), np.array([h.offset for h in hs])


def project_onto_polyhedron(halfspaces, x, tol=DYKSTRA_TOL, max_iter=DYKSTRA_MAX_ITER):
    """Nearest point of a polyhedron by Dykstra's cyclic projections.

    Parameters
    ----------
    halfspaces : PolyhedralCone, sequence of Halfspace, or (W, b) arrays
        The polyhedron ``{p : W p <= b}``; must be nonempty.
    x : array, shape (d,) or (k, d)
        Point(s) to project. Batches are iterated jointly; each point stops
        once the cycle-to-cycle change of its point and correction
        increments drops below ``tol * max(1, |x|)``.

    Returns
    -------
    p : array, same shape as ``x``

    Raises
    ------
    ConvergenceError
        When some point has not settled after ``max_iter`` cycles.
    """
    W, b = _as_constraints(halfspaces)
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    if X.shape[1] != W.shape[1]:
        raise ValueError(f"point has dimension {X.shape[1]}, polyhedron lives in R^{W.shape[1]}")
    out = X.copy()
    viol = X @ W.T - b
    todo = np.flatnonzero((viol > 0).any(1))
    if todo.size == 0:
        return out[0] if single else out

    P = X[todo].copy()
    Q = np.zeros((W.shape[0],) + P.shape)
    scale = np.maximum(1.0, np.linalg.norm(P, axis=1))
    active = np.arange(todo.size)
    last = np.inf
    for _ in range(max_iter):
        prev = P[active].copy()
        moved = np.zeros(active.size)
        for i, (w, bi) in enumerate(zip(W, b)):
            Y = P[active] + Q[i, active]
            step = np.maximum(Y @ w - bi, 0.0)
            proj = Y - step[:, None] * w
            moved += ((Y - proj - Q[i, active]) ** 2).sum(1)
            Q[i, active] = Y - proj
            P[active] = proj
        # the point can return unchanged while the increments still move, so
        # the stop test covers the whole state (point plus increments)
        moved += ((P[active] - prev) ** 2).sum(1)
        change = np.sqrt(moved) / scale[active]
        last = float(change.max())
        active = active[change > tol]
        if active.size == 0:
            break
    else:
        worst = int(todo[active[0]])
        raise ConvergenceError(
            f"Dykstra projection did not converge in {max_iter} cycles "
            f"(point {worst}, last change {last:.3g})",
            residual=last,
        )
    out[todo] = P
    return out[0] if single else out


def signed_distances(cone, X, tol=DYKSTRA_TOL, max_iter=DYKSTRA_MAX_ITER):
    """Signed distance from each row of ``X`` to ``cone``.

    Outside: Euclidean distance to the nearest point of the cone.
    Inside: minus the distance to the complement, which for an intersection
    of halfspaces is the smallest margin ``-<x, w_i>``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    _check_dim(cone, X)
    margins = cone.margins(X)
    worst = margins.max(1)
    out = worst.copy()  # inside: -(min_i -<x, w_i>) = max_i <x, w_i> <= 0
    outside = np.flatnonzero(worst > 0)
    if outside.size:
        P = project_onto_polyhedron(cone, X[outside], tol=tol, max_iter=max_iter)
        out[outside] = np.linalg.norm(X[outside] - P, axis=1)
    return out


def signed_distance(cone, x, **kw):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("signed_distance takes a single point; use signed_distances for batches")
    return float(signed_distances(cone, x[None], **kw)[0])


def project_columns_onto_simplex(V):
    """Project every column of ``V`` (m, n) onto ``{a >= 0, sum(a) = 1}``.

    Sort-and-threshold: with ``u`` sorted descending, the threshold is
    ``(sum(u[:r]) - 1) / r`` for the largest ``r`` keeping ``u[r-1]`` above it.
    """
    V = np.asarray(V, dtype=np.float64)
    m = V.shape[0]
    U = -np.sort(-V, axis=0)
    css = np.cumsum(U, axis=0) - 1.0
    r = np.arange(1, m + 1)[:, None]
    support = U - css / r > 0
    rho = m - 1 - np.argmax(support[::-1], axis=0)  # last True per column
    theta = css[rho, np.arange(V.shape[1])] / (rho + 1)
    return np.maximum(V - theta, 0.0)


def project_onto_simplex(v):
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError("expected a vector")
    if not np.isfinite(v).all():
        raise ValueError("simplex projection needs finite input")
    return project_columns_onto_simplex(v[:, None])[:, 0]
