"""Ground truth for testing: exact tails, quadrature, and asymptotic rate formulas.

The quadratic set used throughout is ``{z1 >= z* + |zr|^2}`` (``A = 2 I``);
its probability is ``int_{z*}^inf phi(z1) P(chi2_{d-1} <= z1 - z*) dz1``.
"""

from dataclasses import dataclass, field
from math import comb

import numpy as np
from scipy import integrate, optimize, special

from .densities import std_normal_pdf, std_normal_sf
from .errors import ConfigError, NumericalError

# ---------------------------------------------------------------------------
# one-dimensional helpers


def mills_tail(z):
    """``phi(z) / z``, the leading-order approximation of the normal tail."""
    z = float(z)
    if not z > 0:
        raise ValueError("mills_tail requires z > 0")
    return float(std_normal_pdf(z)) / z


def gaussian_tail_moments(a, kmax):
    """``M_i = int_a^inf u^i phi(u) du`` for ``i = 0..kmax``.

    ``M_0 = Phibar(a)``, ``M_1 = phi(a)``, ``M_i = a^{i-1} phi(a) + (i - 1) M_{i-2}``.
    """
    m = np.zeros(kmax + 1)
    pa = float(std_normal_pdf(a))
    m[0] = float(std_normal_sf(a))
    if kmax >= 1:
        m[1] = pa
    for i in range(2, kmax + 1):
        m[i] = a ** (i - 1) * pa + (i - 1) * m[i - 2]
    return m


# ---------------------------------------------------------------------------
# quadratic-set probability


def _alpha2(z):
    # int_z^inf phi(t) (1 - 2 Phibar(sqrt(t - z))) dt with t = z + v^2
    f = lambda v: 2.0 * v * std_normal_pdf(z + v * v) * special.erf(v / np.sqrt(2.0))
    val, _ = integrate.quad(f, 0.0, np.inf, epsabs=0.0, epsrel=1e-13, limit=200)
    return val


def alpha_recursion(d, z):
    """``P(Z1 >= z + |Z_rest|^2)`` for standard normal ``Z`` in ``d`` dimensions.

    Odd ``d`` uses the closed-form chain seeded at ``Phibar(z)``::

        alpha_d = alpha_{d-2} - c_d sum_i C(m, i) (-z - 1/2)^{m-i} M_i(z + 1/2),
        m = (d - 3) / 2,  c_d = exp(1/8 + z/2) / (Gamma((d - 1)/2) 2^m).

    Even ``d`` starts from the one-dimensional ``alpha_2`` integral and adds
    the same per-step decrement evaluated by quadrature.
    """
    d = int(d)
    if d < 2:
        raise ValueError("alpha_recursion needs d >= 2")
    z = float(z)
    pref = np.exp(0.125 + 0.5 * z)
    a = z + 0.5
    if d % 2 == 1:
        mmax = (d - 3) // 2
        M = gaussian_tail_moments(a, max(mmax, 0))
        alpha = float(std_normal_sf(z))
        for k in range(3, d + 1, 2):
            m = (k - 3) // 2
            cd = pref / (special.gamma((k - 1) / 2.0) * 2.0 ** m)
            s = sum(comb(m, i) * (-a) ** (m - i) * M[i] for i in range(m + 1))
            alpha -= cd * s
        return alpha
    alpha = _alpha2(z)
    for k in range(4, d + 1, 2):
        m = (k - 3) / 2.0
        cd = pref / (special.gamma((k - 1) / 2.0) * 2.0 ** m)
        f = lambda u: std_normal_pdf(u) * (u - a) ** m
        val, _ = integrate.quad(f, a, np.inf, epsabs=0.0, epsrel=1e-13, limit=200)
        alpha -= cd * val
    return alpha


def alpha_chi2(d, z):
    """Same quantity as :func:`alpha_recursion` via the chi-square cdf (independent path)."""
    k = int(d) - 1
    f = lambda v: 2.0 * v * std_normal_pdf(z + v * v) * special.chdtr(k, v * v)
    val, _ = integrate.quad(f, 0.0, np.inf, epsabs=0.0, epsrel=1e-13, limit=200)
    return val


def alpha_asymptotic(z, eta, s, p, d):
    """``(2 pi)^{-d/2} Gamma(s + 1) eta z^{p - 1 - s} exp(-z^2 / 2)``."""
    return (2 * np.pi) ** (-d / 2.0) * special.gamma(s + 1) * eta * z ** (p - 1 - s) * np.exp(-0.5 * z * z)


def ball_volume(k):
    """Volume of the unit ball in ``k`` dimensions."""
    return np.pi ** (k / 2.0) / special.gamma(k / 2.0 + 1.0)


# ---------------------------------------------------------------------------
# exact moments of the estimators on the quadratic set (A = 2 I)


def _chi2cdf(k, x):
    return special.chdtr(k, np.maximum(x, 0.0)) if k > 0 else np.where(x >= 0, 1.0, 0.0)


def estimator_moment(kind, z, d, order=2, theta=None, lam=None, shift=None):
    """``E[alpha_hat^order]`` on the quadratic set for kind in ``O, E, L, N, AR``.

    One-dimensional quadratures over the first coordinate; the transverse
    coordinates integrate to a chi-square cdf.
    """
    k = d - 1
    z = float(z)
    if kind == "AR":
        return alpha_chi2(d, z)
    if kind == "O":
        s = k / 2.0
        eta = ball_volume(k)
        if lam is None:
            theta = 1.0 / (1.0 + s) if theta is None else theta
            lam = theta * z
        c = (2 * np.pi) ** (-k / 2.0) * eta

        def f(t):
            w = z + t
            lw = -0.5 * w * w - 0.5 * np.log(2 * np.pi) - np.log(lam) + lam * t
            val = c * np.exp(lw) * t ** s
            return val ** order * lam * np.exp(-lam * t)
        out, _ = integrate.quad(f, 0.0, np.inf, epsabs=0.0, epsrel=1e-12, limit=400)
        return out
    if kind in ("E", "L"):
        rate = z if lam is None else lam
        fac = 1.0 if kind == "E" else 0.5

        def f(t):
            w = z + t
            lw = -0.5 * w * w - 0.5 * np.log(2 * np.pi) - np.log(fac * rate) + rate * t
            return np.exp(order * lw) * fac * rate * np.exp(-rate * t) * _chi2cdf(k, t)
        out, _ = integrate.quad(f, 0.0, np.inf, epsabs=0.0, epsrel=1e-12, limit=400)
        return out
    if kind == "N":
        mu = z if shift is None else float(shift)
        if order != 2:
            raise ValueError("N moments implemented for order 2 only")

        # E[w^2 1_S] = exp(mu^2) P(Z - mu e1 in S)
        def f(t):
            return std_normal_pdf(z + mu + t) * _chi2cdf(k, t)
        out, _ = integrate.quad(f, 0.0, np.inf, epsabs=0.0, epsrel=1e-12, limit=400)
        return np.exp(mu * mu) * out
    raise ValueError(f"unknown estimator kind {kind!r}")


# ---------------------------------------------------------------------------
# line intervals and quadrature


def feasible_intervals(g, lo, hi, ngrid=801, xtol=1e-14):
    """Sub-intervals of ``[lo, hi]`` on which the vectorised ``g`` is ``>= 0``.

    A grid scan locates sign changes which are then refined by Brent's
    method. Intervals narrower than the grid spacing can be missed.
    """
    x = np.linspace(lo, hi, ngrid)
    feas = np.asarray(g(x)) >= 0
    out = []
    start = lo if feas[0] else None
    scalar = lambda t: float(np.asarray(g(np.array([t])))[0])
    for i in range(ngrid - 1):
        if feas[i] == feas[i + 1]:
            continue
        a, b = x[i], x[i + 1]
        # margin may be discontinuous; treat it as a sign function
        root = optimize.brentq(lambda t: 1.0 if scalar(t) >= 0 else -1.0, a, b, xtol=xtol)
        if feas[i]:
            out.append((start, root))
            start = None
        else:
            start = root
    if start is not None:
        out.append((start, hi))
    return out


_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


def _batch_line_integrals(S, outer, lo, hi, h=None, ngrid=241, iters=56, piece=1.0):
    """``int phi(z1) h(z1, zr) 1_S dz1`` for every row ``zr`` of ``outer``."""
    npts, k = outer.shape
    d = k + 1
    grid = np.linspace(lo, hi, ngrid)
    Z = np.empty((npts, ngrid, d))
    Z[..., 0] = grid
    Z[..., 1:] = outer[:, None, :]
    F = S.margin(Z.reshape(-1, d)).reshape(npts, ngrid) >= 0
    r, c = np.nonzero(F[:, 1:] != F[:, :-1])
    a, b = grid[c], grid[c + 1]
    fa = F[r, c]
    if r.size:
        pts = np.empty((r.size, d))
        pts[:, 1:] = outer[r]
        for _ in range(iters):
            m = 0.5 * (a + b)
            pts[:, 0] = m
            same = (S.margin(pts) >= 0) == fa
            a = np.where(same, m, a)
            b = np.where(same, b, m)
    # starts: first feasible point after an infeasible run; ends: last feasible point
    s_row = np.concatenate([r[~fa], np.nonzero(F[:, 0])[0]])
    s_pos = np.concatenate([b[~fa], np.full(int(F[:, 0].sum()), -np.inf)])
    e_row = np.concatenate([r[fa], np.nonzero(F[:, -1])[0]])
    e_pos = np.concatenate([a[fa], np.full(int(F[:, -1].sum()), np.inf)])
    out = np.zeros(npts)
    if h is None:
        np.add.at(out, s_row, std_normal_sf(s_pos))
        np.add.at(out, e_row, -std_normal_sf(e_pos))
        return out
    so = np.lexsort((s_pos, s_row))
    eo = np.lexsort((e_pos, e_row))
    rows, s, e = s_row[so], s_pos[so], e_pos[eo]
    s = np.maximum(s, lo)
    e = np.minimum(e, hi)
    if rows.size == 0:
        return out
    npiece = max(1, int(np.ceil((hi - lo) / piece)))
    frac = np.linspace(0.0, 1.0, npiece + 1)
    left = s[:, None] + (e - s)[:, None] * frac[:-1]
    width = (e - s)[:, None] / npiece
    nodes = left[..., None] + 0.5 * width[..., None] * (_GL_X + 1.0)
    wts = 0.5 * width[..., None] * _GL_W
    full = np.empty(nodes.shape + (d,))
    full[..., 0] = nodes
    full[..., 1:] = outer[rows][:, None, None, :]
    vals = std_normal_pdf(nodes) * np.asarray(h(full.reshape(-1, d))).reshape(nodes.shape)
    np.add.at(out, rows, np.sum(vals * wts, axis=(1, 2)))
    return out


def quadrature_alpha(S, h=None, box=10.0, above=12.0, rtol=1e-10, atol=0.0, ngrid=241):
    """``int_S h(z) phi_d(z) dz`` for ``d <= 3``.

    The first coordinate is handled line by line: feasible intervals on
    ``[-box, z1* + above]`` are located and integrated exactly (``h = 1``) or
    with piecewise Gauss-Legendre. An interval reaching the top of the range
    is extended to infinity. The remaining coordinates use adaptive
    vectorised cubature on ``[-box, box]^{d-1}``.
    """
    d = S.dim
    if d > 3:
        raise ValueError("quadrature oracle supports d <= 3")
    lo = -box
    hi = (S.z1star if S.z1star is not None else 0.0) + above

    if d == 1:
        return float(_batch_line_integrals(S, np.zeros((1, 0)), lo, hi, h, ngrid=ngrid)[0])

    def f(x):
        x = np.asarray(x, dtype=float)
        w = np.prod(std_normal_pdf(x), axis=1)
        return w * _batch_line_integrals(S, x, lo, hi, h, ngrid=ngrid)

    pts = None
    if S.quad_points is not None:
        pts = [np.atleast_1d(np.asarray(p, dtype=float)) for p in S.quad_points]
    res = integrate.cubature(f, np.full(d - 1, -box), np.full(d - 1, box), rtol=rtol, atol=atol,
                             points=pts, max_subdivisions=20000)
    if res.status != "converged":
        raise NumericalError(f"quadrature did not converge (estimated error {res.error:.3g})")
    return float(res.estimate)


# ---------------------------------------------------------------------------
# theoretical rates


def b_theta(theta, s):
    """Limiting second-moment ratio of the full-information estimator.

    ``theta^{-1} (2 - theta)^{-2s-1} Gamma(2s + 1) / Gamma(s + 1)^2``.
    """
    if not 0 < theta < 2:
        raise ValueError("theta must lie in (0, 2)")
    return (special.gamma(2 * s + 1) / special.gamma(s + 1) ** 2
            / theta / (2 - theta) ** (2 * s + 1))


def b_optimal(s):
    """``b`` at ``theta = 1/(1+s)``."""
    return ((s + 1) * ((s + 1) / (2 * s + 1)) ** (2 * s + 1)
            * np.exp(special.gammaln(2 * s + 1) - 2 * special.gammaln(s + 1)))


def b_optimal_asymptote(s):
    """``sqrt(s + 1) e / (2 sqrt(pi))``."""
    return np.sqrt(s + 1) * np.e / (2 * np.sqrt(np.pi))


@dataclass
class RateReport:
    kind: str
    regime: str
    exponent: float
    constant: float
    inputs: dict = field(default_factory=dict)

    def predicted_ratio(self, z):
        """Predicted ``E[alpha_hat^2] / alpha^2`` at rarity ``z``."""
        return self.constant * np.asarray(z, dtype=float) ** self.exponent

    def to_dict(self):
        return {"kind": self.kind, "regime": self.regime, "exponent": float(self.exponent),
                "constant": float(self.constant), "inputs": self.inputs}


def kappa(constants, constants_2c, d, theta=1.0):
    """Second-moment constant of the partial-information estimator."""
    s, s2 = constants.s, constants_2c.s
    eta, eta2 = constants.eta, constants_2c.eta
    return ((2 * np.pi) ** ((d - 1) / 2.0) / theta / (2 - theta) ** (s2 + 1)
            * eta2 / eta ** 2 * special.gamma(s2 + 1) / special.gamma(s + 1) ** 2)


def xi(constants, constants_2c, d):
    """Second-moment constant of the mean-shift estimator."""
    s, s2 = constants.s, constants_2c.s
    eta, eta2 = constants.eta, constants_2c.eta
    return ((2 * np.pi) ** (d / 2.0) * eta2 * special.gamma(s2 + 1)
            / (2 ** (s2 + 1) * eta ** 2 * special.gamma(s + 1) ** 2))


def _doubled(constants, constants_2c):
    if constants_2c is not None:
        return constants_2c
    if all(int(e) == 0 for e in constants.c):
        return constants
    raise ConfigError("rates for non-constant costs need the doubled-cost constants (s(2c), eta(2c))")


def theoretical_rates(kind, constants, d, theta=None, regime="translation", constants_2c=None,
                      weights=None):
    """Predicted growth ``constant * z1*^exponent`` of ``E[alpha_hat^2] / alpha^2``.

    ``kind`` is one of ``O, E, L, N, eN``. For ``eN`` pass lists of
    per-point constants (and doubled constants) plus mixture ``weights``.
    """
    if regime not in ("translation", "scaling"):
        raise ConfigError(f"unknown regime {regime!r}")
    extra = (d - 1) if regime == "scaling" else 0
    if kind == "O":
        if constants is None:
            raise ConfigError("O rates need structural constants")
        th = 1.0 / (1.0 + constants.s) if theta is None else theta
        return RateReport("O", regime, 0.0, float(b_theta(th, constants.s)),
                          {"s": constants.s, "theta": th, "d": d})
    if kind in ("E", "L", "N"):
        if constants is None:
            raise ConfigError(f"{kind} rates need structural constants")
        c2 = _doubled(constants, constants_2c)
        th = 1.0 if theta is None else theta
        expo = 2 * constants.s - c2.s + extra
        inputs = {"s_c": constants.s, "s_2c": c2.s, "eta_c": constants.eta, "eta_2c": c2.eta,
                  "d": d, "theta": th}
        if kind == "E":
            return RateReport("E", regime, expo, float(kappa(constants, c2, d, th)), inputs)
        if kind == "L":
            return RateReport("L", regime, expo, 4.0 * float(kappa(constants, c2, d, th)), inputs)
        return RateReport("N", regime, expo + 1.0, float(xi(constants, c2, d)), inputs)
    if kind == "eN":
        consts = list(constants)
        c2s = list(constants_2c) if constants_2c is not None else [None] * len(consts)
        nu = np.full(len(consts), 1.0 / len(consts)) if weights is None else np.asarray(weights, float)
        th = 1.0 if theta is None else theta
        vals, expos = [], []
        for ck, c2k, nk in zip(consts, c2s, nu):
            c2k = _doubled(ck, c2k)
            vals.append(kappa(ck, c2k, d, th) / nk)
            expos.append(2 * ck.s - c2k.s + (d - 1))
        return RateReport("eN", regime, float(max(expos)), float(max(vals)),
                          {"d": d, "weights": nu.tolist(), "theta": th})
    raise ConfigError(f"unknown estimator kind {kind!r}")
