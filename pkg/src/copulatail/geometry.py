"""Cholesky factors, Householder alignments and the standardising change of variables."""

from dataclasses import dataclass

import numpy as np

from .errors import DecompositionError


def cholesky(sigma, sym_tol=1e-12):
    """Lower-triangular ``A`` with ``A @ A.T == sigma``.

    Raises DecompositionError naming the first pivot that is not
    positive beyond ``1e-12 * max(diag(sigma))``.
    """
    s = np.array(sigma, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError(f"covariance must be square, got shape {s.shape}")
    scale = max(np.max(np.abs(s)), 1.0)
    if np.max(np.abs(s - s.T)) > sym_tol * scale:
        raise ValueError("covariance matrix is not symmetric")
    d = s.shape[0]
    tol = 1e-12 * np.max(np.diag(s)) if d else 0.0
    a = np.zeros_like(s)
    for j in range(d):
        piv = s[j, j] - a[j, :j] @ a[j, :j]
        if not piv > tol:
            raise DecompositionError(
                f"matrix is not positive definite: pivot {j} equals {piv:.3g}", pivot=j)
        a[j, j] = np.sqrt(piv)
        a[j + 1:, j] = (s[j + 1:, j] - a[j + 1:, :j] @ a[j, :j]) / a[j, j]
    return a


@dataclass(frozen=True)
class RotationMatrix:
    """Orthogonal ``R`` with ``R @ anchor == (|anchor|, 0, ..., 0)``.

    ``R.T`` maps the first axis back onto the direction of ``anchor``.
    """

    R: np.ndarray
    anchor: np.ndarray

    def align(self, z):
        """Rotate points so the anchor direction becomes the first axis."""
        return np.asarray(z, dtype=float) @ self.R.T

    def unalign(self, w):
        """Inverse of :meth:`align`."""
        return np.asarray(w, dtype=float) @ self.R


def make_rotation(zstar):
    """Householder reflection (with a sign fix) sending ``zstar`` to ``|zstar| e1``."""
    z = np.asarray(zstar, dtype=float).ravel()
    nrm = np.linalg.norm(z)
    if not nrm > 0:
        raise ValueError("cannot align the zero vector")
    d = z.size
    u = z / nrm
    sgn = 1.0 if u[0] >= 0 else -1.0
    v = u.copy()
    v[0] += sgn
    h = np.eye(d) - 2.0 * np.outer(v, v) / (v @ v)
    # h @ u = -sgn e1, flip the first row to land on +e1
    h[0, :] *= -sgn
    return RotationMatrix(R=h, anchor=z.copy())


def standardize(S_x, mu, sigma):
    """Pull a set over ``x ~ N(mu, sigma)`` back to standard normal ``z``.

    The returned set has membership ``z -> S_x.member(A z + mu)`` with
    ``A = cholesky(sigma)``; an attached cost is transformed the same way.
    """
    from .constraints import ConstraintSet, MappedCost

    mu = np.asarray(mu, dtype=float).ravel()
    a = cholesky(sigma)
    if a.shape[0] != S_x.dim or mu.size != S_x.dim:
        raise ValueError("mean/covariance dimension does not match the set")

    def to_x(z):
        return np.asarray(z, dtype=float) @ a.T + mu

    cons = [_compose(g, S_x, to_x) for g in range(len(S_x.constraints))]
    cost = None if S_x.cost is None else MappedCost(S_x.cost, to_x)
    out = ConstraintSet(cons, S_x.dim, regime="fixed", z1star=None, cost=cost,
                        name=f"standardized({S_x.name})")
    out.to_x = to_x
    out.to_z = lambda x: np.linalg.solve(a, (np.asarray(x, dtype=float) - mu).T).T
    return out


def unstandardize(S_z, mu, sigma):
    """Inverse of :func:`standardize`: a set over ``x`` from one over ``z``."""
    from .constraints import ConstraintSet

    mu = np.asarray(mu, dtype=float).ravel()
    a = cholesky(sigma)

    def to_z(x):
        return np.linalg.solve(a, (np.asarray(x, dtype=float) - mu).T).T

    cons = [_compose(g, S_z, to_z) for g in range(len(S_z.constraints))]
    return ConstraintSet(cons, S_z.dim, regime="fixed", z1star=None,
                         name=f"unstandardized({S_z.name})")


def _compose(i, S, fmap):
    def g(z):
        return S.constraint_values(fmap(z))[..., i]
    return g
