"""Gaussian-copula (NORTA) models.

``T(z) = F^{-1}(Phi(A z))`` with ``A`` the lower Cholesky factor of the
z-space correlation matrix, so ``A z`` has covariance ``A A^T``. Every
probability is kept in log space and fed to the log-probability quantiles
of :class:`~copulatail.densities.Marginal`, which keeps ``T`` finite far into
the tails.
"""

import warnings

import numpy as np
from scipy import linalg, special

from .constraints import ConstraintSet, MappedCost
from .densities import Marginal
from .errors import SaturationError
from .geometry import cholesky


class NortaModel:
    """Marginals plus the Cholesky factor of a correlation matrix.

    Parameters
    ----------
    marginals : sequence of Marginal
    corr : (d, d) array_like
        Symmetric positive definite matrix with unit diagonal.
    """

    def __init__(self, marginals, corr):
        self.marginals = list(marginals)
        corr = np.array(corr, dtype=float)
        d = len(self.marginals)
        if corr.shape != (d, d):
            raise ValueError(f"correlation matrix must be {d}x{d}, got {corr.shape}")
        if np.max(np.abs(np.diag(corr) - 1.0)) > 1e-12:
            raise ValueError("correlation matrix must have a unit diagonal")
        self.corr = corr
        self.A = cholesky(corr)

    @property
    def dim(self):
        return len(self.marginals)

    def to_dict(self):
        return {"marginals": [m.to_dict() for m in self.marginals], "corr": self.corr.tolist()}

    def forward(self, z, strict=True):
        """``x = T(z)``.

        With ``strict`` a non-finite coordinate raises :class:`SaturationError`
        naming its index; otherwise those rows come back as ``nan``.
        """
        z = np.asarray(z, dtype=float)
        if z.shape[-1] != self.dim:
            raise ValueError(f"expected dimension {self.dim}, got {z.shape[-1]}")
        y = z @ self.A.T
        x = np.empty_like(y)
        with np.errstate(all="ignore"):
            for i, m in enumerate(self.marginals):
                yi = y[..., i]
                lower = m.ppf_log(special.log_ndtr(yi))
                upper = m.isf_log(special.log_ndtr(-yi))
                x[..., i] = np.where(yi < 0, lower, upper)
        bad = ~np.isfinite(x)
        if np.any(bad):
            if strict:
                idx = int(np.argwhere(bad)[0][-1])
                raise SaturationError(f"quantile saturated in coordinate {idx}", index=idx)
            x[np.any(bad, axis=-1)] = np.nan
        return x

    def inverse(self, x):
        """``z = A^{-1} Phi^{-1}(F(x))``; points off the open support raise ValueError."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise ValueError(f"expected dimension {self.dim}, got {x.shape[-1]}")
        y = np.empty_like(x)
        for i, m in enumerate(self.marginals):
            lc, ls = m.logcdf(x[..., i]), m.logsf(x[..., i])
            if np.any(~np.isfinite(lc) | ~np.isfinite(ls) | (ls == 0) | (lc == 0)):
                raise ValueError(f"coordinate {i} lies on or outside the support of {m!r}")
            y[..., i] = np.where(lc < ls, special.ndtri_exp(lc), -special.ndtri_exp(ls))
        flat = y.reshape(-1, self.dim)
        z = linalg.solve_triangular(self.A, flat.T, lower=True).T
        return z.reshape(x.shape)


class PullbackSet(ConstraintSet):
    """``{z : T(z) in S_x}``; rows where ``T`` fails are infeasible."""

    def __init__(self, model, S_x):
        if S_x.dim != model.dim:
            raise ValueError("set and model dimensions differ")
        self.model = model
        self.S_x = S_x
        cons = [self._single(i) for i in range(len(S_x.constraints))]
        cost = None if S_x.cost is None else MappedCost(S_x.cost, self.to_x)
        super().__init__(cons, model.dim, "fixed", cost=cost, name=f"pullback({S_x.name})")

    def _single(self, i):
        def g(z):
            return self.S_x.constraint_values(self.to_x(z))[..., i]
        return g

    def to_x(self, z):
        return self.model.forward(z, strict=False)

    def to_z(self, x):
        return self.model.inverse(x)

    def constraint_values(self, z):
        # one pass through T for all constraints
        z = np.asarray(z, dtype=float)
        if z.shape[-1] != self.dim:
            raise ValueError(f"point has dimension {z.shape[-1]}, set has {self.dim}")
        return self.S_x.constraint_values(self.to_x(z))


def pullback_set(model, S_x):
    """``{z : T(z) in S_x}``; transform failures count as infeasible.

    The cost of ``S_x`` (if any) becomes the black-box cost ``h o T``.
    """
    return PullbackSet(model, S_x)


def pullback_cost(model, h):
    return MappedCost(h, lambda z: model.forward(z, strict=False))


def tail_growth_probe(model, h=None, directions=None, radii=None):
    """Classify how ``h(T(r u))`` grows along rays.

    ``log h`` is fitted against ``log r`` and against ``r^2``; when the
    quadratic-exponent fit is the better one the growth is flagged as
    super-exponential and a RuntimeWarning is issued. The default cost is
    ``|T(z) - T(0)|_1`` and the default directions are the coordinate axes
    plus the diagonal.
    """
    d = model.dim
    if directions is None:
        directions = np.vstack([np.eye(d), np.ones((1, d))])
    U = np.atleast_2d(np.asarray(directions, dtype=float))
    U = U / np.linalg.norm(U, axis=1, keepdims=True)
    r = np.linspace(3.0, 8.0, 11) if radii is None else np.asarray(radii, dtype=float)
    if h is None:
        x0 = model.forward(np.zeros(d))

        def h(x):
            return np.sum(np.abs(x - x0), axis=-1)

    logr, r2, logh = [], [], []
    for u in U:
        vals = np.asarray(h(model.forward(r[:, None] * u, strict=False)), dtype=float)
        ok = np.isfinite(vals) & (vals > 0)
        logr.append(np.log(r[ok]))
        r2.append(r[ok] ** 2)
        logh.append(np.log(vals[ok]))
    logr, r2, logh = map(np.concatenate, (logr, r2, logh))
    if logh.size < 3:
        raise ValueError("too few finite positive cost values along the probe rays")

    def fit(x):
        coef, res, *_ = np.polyfit(x, logh, 1, full=True)
        return coef[0], float(res[0]) if res.size else 0.0

    slope_log, rss_log = fit(logr)
    slope_r2, rss_r2 = fit(r2)
    superexp = rss_r2 < rss_log and slope_r2 > 0
    label = "super-exponential" if superexp else "regularly-varying-compatible"
    if superexp:
        warnings.warn("cost grows super-exponentially along the NORTA rays; the eN "
                      "second-moment rates may not apply", RuntimeWarning, stacklevel=2)
    return {"classification": label, "slope_log": float(slope_log), "slope_r2": float(slope_r2),
            "rss_log": rss_log, "rss_r2": rss_r2}


# ---------------------------------------------------------------------------
# capacitated two-period order scenario

CTO_MARGINALS = (Marginal.normal(12.0, 9.0), Marginal.weibull(5.0, 10.0),
                 Marginal.triangular(3.0, 8.0, 16.0))


def cto_corr(sign):
    """z-space correlation matrix; ``sign`` is ``+1``/``"positive"`` or ``-1``/``"negative"``."""
    if sign in ("positive", "pos", 1, +1):
        s = 1.0
    elif sign in ("negative", "neg", -1):
        s = -1.0
    else:
        raise ValueError(f"sign must be positive or negative, got {sign!r}")
    r12, r13, r23 = s * 0.499, s * 0.497, 0.747
    return np.array([[1.0, r12, r13], [r12, 1.0, r23], [r13, r23, 1.0]])


def cto_model(sign):
    return NortaModel(CTO_MARGINALS, cto_corr(sign))
