"""Random streams, univariate densities and the marginal families used by NORTA."""

from dataclasses import dataclass

import numpy as np
from scipy import special

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


@dataclass(frozen=True)
class RngStream:
    """A reproducible substream ``stream_id`` of the master ``seed``.

    Streams are Philox generators keyed by ``SeedSequence(seed, spawn_key=(stream_id,))``,
    so distinct ids give independent streams and equal ids give identical ones.
    """

    seed: int
    stream_id: int = 0

    def generator(self):
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream_id),))
        return np.random.Generator(np.random.Philox(ss))


def as_generator(rng):
    """Coerce an int seed, RngStream or Generator into a Generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    if rng is None or isinstance(rng, (int, np.integer)):
        return RngStream(0 if rng is None else int(rng)).generator()
    raise TypeError(f"cannot make a generator from {type(rng).__name__}")


def _open_uniform(rng, size):
    # uniforms strictly inside (0, 1)
    k = rng.integers(0, 2**53, size=size, dtype=np.int64)
    return (k + 0.5) * 2.0**-53


# ---------------------------------------------------------------------------
# standard normal

def std_normal_pdf(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x - _LOG_SQRT_2PI)


def std_normal_logpdf(x):
    x = np.asarray(x, dtype=float)
    return -0.5 * x * x - _LOG_SQRT_2PI


def std_normal_cdf(x):
    return special.ndtr(np.asarray(x, dtype=float))


def std_normal_sf(x):
    return special.ndtr(-np.asarray(x, dtype=float))


def std_normal_quantile(p):
    """Inverse of the standard normal cdf; ``p`` must lie in (0, 1)."""
    p = np.asarray(p, dtype=float)
    if np.any(~((p > 0.0) & (p < 1.0))):
        raise ValueError("normal quantile requires p in (0, 1)")
    return special.ndtri(p)


# ---------------------------------------------------------------------------
# shifted exponential and Laplace proposals

def _check_rate(rate):
    if not rate > 0:
        raise ValueError(f"rate must be positive, got {rate}")


def shifted_exp_pdf(x, rate, shift):
    """Density ``rate * exp(-rate (x - shift))`` on ``[shift, inf)``."""
    _check_rate(rate)
    x = np.asarray(x, dtype=float)
    t = x - shift
    return np.where(t >= 0, rate * np.exp(-rate * np.maximum(t, 0.0)), 0.0)


def shifted_exp_logpdf(x, rate, shift):
    _check_rate(rate)
    t = np.asarray(x, dtype=float) - shift
    with np.errstate(divide="ignore"):
        return np.where(t >= 0, np.log(rate) - rate * t, -np.inf)


def shifted_exp_sample(rng, rate, shift, size=None):
    _check_rate(rate)
    rng = as_generator(rng)
    return shift + rng.standard_exponential(size) / rate


def laplace_pdf(x, rate, center):
    """Density ``(rate / 2) exp(-rate |x - center|)``."""
    _check_rate(rate)
    x = np.asarray(x, dtype=float)
    return 0.5 * rate * np.exp(-rate * np.abs(x - center))


def laplace_logpdf(x, rate, center):
    _check_rate(rate)
    x = np.asarray(x, dtype=float)
    return np.log(0.5 * rate) - rate * np.abs(x - center)


def laplace_sample(rng, rate, center, size=None):
    """Inverse-cdf Laplace draws."""
    _check_rate(rate)
    rng = as_generator(rng)
    u = _open_uniform(rng, size)
    lo = u < 0.5
    out = np.where(lo, np.log(2.0 * np.where(lo, u, 0.25)),
                   -np.log(2.0 - 2.0 * np.where(lo, 0.75, u)))
    out = center + out / rate
    return float(out) if size is None else out


def mvn_sample(rng, d, size=None):
    """Standard normal vector(s) in ``d`` dimensions."""
    if int(d) < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    rng = as_generator(rng)
    shape = (int(d),) if size is None else (int(size), int(d))
    return rng.standard_normal(shape)


# ---------------------------------------------------------------------------
# marginal families

_FAMILIES = ("normal", "exponential", "weibull", "triangular", "pareto")


class Marginal:
    """A continuous univariate law with closed-form cdf and quantile.

    Parameters
    ----------
    family : str
        One of ``normal(mu, var)``, ``exponential(rate)``,
        ``weibull(shape, scale)``, ``triangular(a, m, b)``,
        ``pareto(shape, scale)``.
    *params : float
        Family parameters in the order above.

    Notes
    -----
    Besides ``cdf``/``ppf`` every family offers ``logcdf``/``logsf`` and the
    log-probability quantiles ``ppf_log``/``isf_log`` so extreme tails can be
    mapped without rounding the probability to 0 or 1.
    """

    def __init__(self, family, *params):
        family = str(family).lower()
        if family not in _FAMILIES:
            raise ValueError(f"unknown marginal family {family!r}")
        params = tuple(float(p) for p in params)
        nparams = {"normal": 2, "exponential": 1, "weibull": 2,
                   "triangular": 3, "pareto": 2}[family]
        if len(params) != nparams:
            raise ValueError(f"{family} takes {nparams} parameters, got {len(params)}")
        if family == "normal" and not params[1] > 0:
            raise ValueError("normal variance must be positive")
        if family == "exponential" and not params[0] > 0:
            raise ValueError("exponential rate must be positive")
        if family in ("weibull", "pareto") and not (params[0] > 0 and params[1] > 0):
            raise ValueError(f"{family} shape and scale must be positive")
        if family == "triangular":
            a, m, b = params
            if not a < b:
                raise ValueError(f"triangular requires a < b, got a={a}, b={b}")
            if not a <= m <= b:
                raise ValueError(f"triangular mode {m} outside [{a}, {b}]")
        self.family = family
        self.params = params

    # convenience constructors
    @classmethod
    def normal(cls, mu, var):
        return cls("normal", mu, var)

    @classmethod
    def exponential(cls, rate):
        return cls("exponential", rate)

    @classmethod
    def weibull(cls, shape, scale):
        return cls("weibull", shape, scale)

    @classmethod
    def triangular(cls, a, m, b):
        return cls("triangular", a, m, b)

    @classmethod
    def pareto(cls, shape, scale):
        return cls("pareto", shape, scale)

    def __repr__(self):
        return f"Marginal({self.family!r}, {', '.join(repr(p) for p in self.params)})"

    def to_dict(self):
        return {"family": self.family, "params": list(self.params)}

    @property
    def support(self):
        f, p = self.family, self.params
        if f == "normal":
            return (-np.inf, np.inf)
        if f in ("exponential", "weibull"):
            return (0.0, np.inf)
        if f == "triangular":
            return (p[0], p[2])
        return (p[1], np.inf)

    @property
    def mean(self):
        f, p = self.family, self.params
        if f == "normal":
            return p[0]
        if f == "exponential":
            return 1.0 / p[0]
        if f == "weibull":
            return p[1] * special.gamma(1.0 + 1.0 / p[0])
        if f == "triangular":
            return sum(p) / 3.0
        return np.inf if p[0] <= 1 else p[0] * p[1] / (p[0] - 1.0)

    @property
    def std(self):
        f, p = self.family, self.params
        if f == "normal":
            return np.sqrt(p[1])
        if f == "exponential":
            return 1.0 / p[0]
        if f == "weibull":
            g1 = special.gamma(1.0 + 1.0 / p[0])
            g2 = special.gamma(1.0 + 2.0 / p[0])
            return p[1] * np.sqrt(g2 - g1 * g1)
        if f == "triangular":
            a, m, b = p
            return np.sqrt((a * a + m * m + b * b - a * m - a * b - m * b) / 18.0)
        k, s = p
        if k <= 2:
            return np.inf
        return s / (k - 1.0) * np.sqrt(k / (k - 2.0))

    # -- densities ---------------------------------------------------------
    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        f, p = self.family, self.params
        with np.errstate(all="ignore"):
            if f == "normal":
                sd = np.sqrt(p[1])
                return std_normal_pdf((x - p[0]) / sd) / sd
            if f == "exponential":
                return np.where(x >= 0, p[0] * np.exp(-p[0] * x), 0.0)
            if f == "weibull":
                k, lam = p
                t = np.where(x > 0, x / lam, 1.0)
                val = k / lam * t ** (k - 1) * np.exp(-t**k)
                return np.where(x > 0, val, 0.0)
            if f == "triangular":
                a, m, b = p
                up = 2 * (x - a) / ((b - a) * (m - a)) if m > a else np.zeros_like(x)
                down = 2 * (b - x) / ((b - a) * (b - m)) if b > m else np.zeros_like(x)
                val = np.where(x <= m, up, down)
                return np.where((x >= a) & (x <= b), val, 0.0)
            k, s = p
            return np.where(x >= s, k * s**k / np.where(x >= s, x, s) ** (k + 1), 0.0)

    def logcdf(self, x):
        x = np.asarray(x, dtype=float)
        f, p = self.family, self.params
        with np.errstate(all="ignore"):
            if f == "normal":
                return special.log_ndtr((x - p[0]) / np.sqrt(p[1]))
            if f == "exponential":
                return np.where(x > 0, np.log(-np.expm1(-p[0] * np.maximum(x, 0))), -np.inf)
            if f == "weibull":
                k, lam = p
                t = (np.maximum(x, 0) / lam) ** k
                return np.where(x > 0, np.log(-np.expm1(-t)), -np.inf)
            if f == "triangular":
                a, m, b = p
                xc = np.clip(x, a, b)
                lo = 2 * np.log(xc - a) - np.log((b - a) * (m - a)) if m > a else np.full_like(xc, -np.inf)
                hi = np.log1p(-((b - xc) ** 2) / ((b - a) * (b - m))) if b > m else np.zeros_like(xc)
                out = np.where(xc <= m, lo, hi)
                return np.where(x <= a, -np.inf, np.where(x >= b, 0.0, out))
            k, s = p
            return np.where(x > s, np.log(-np.expm1(k * np.log(s / np.maximum(x, s)))), -np.inf)

    def logsf(self, x):
        x = np.asarray(x, dtype=float)
        f, p = self.family, self.params
        with np.errstate(all="ignore"):
            if f == "normal":
                return special.log_ndtr(-(x - p[0]) / np.sqrt(p[1]))
            if f == "exponential":
                return np.where(x > 0, -p[0] * x, 0.0)
            if f == "weibull":
                k, lam = p
                return np.where(x > 0, -(np.maximum(x, 0) / lam) ** k, 0.0)
            if f == "triangular":
                a, m, b = p
                xc = np.clip(x, a, b)
                lo = np.log1p(-((xc - a) ** 2) / ((b - a) * (m - a))) if m > a else np.zeros_like(xc)
                hi = 2 * np.log(b - xc) - np.log((b - a) * (b - m)) if b > m else np.full_like(xc, -np.inf)
                out = np.where(xc <= m, lo, hi)
                return np.where(x <= a, 0.0, np.where(x >= b, -np.inf, out))
            k, s = p
            return np.where(x > s, k * np.log(s / np.maximum(x, s)), 0.0)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.family == "normal":
            return special.ndtr((x - self.params[0]) / np.sqrt(self.params[1]))
        lc, ls = self.logcdf(x), self.logsf(x)
        # pick the branch that keeps precision
        return np.where(lc < -0.7, np.exp(lc), -np.expm1(ls))

    def sf(self, x):
        x = np.asarray(x, dtype=float)
        if self.family == "normal":
            return special.ndtr(-(x - self.params[0]) / np.sqrt(self.params[1]))
        lc, ls = self.logcdf(x), self.logsf(x)
        return np.where(ls < -0.7, np.exp(ls), -np.expm1(lc))

    # -- quantiles -----------------------------------------------------------
    def ppf_log(self, logp):
        """Quantile at ``p = exp(logp)``; accurate in the lower tail."""
        logp = np.asarray(logp, dtype=float)
        f, p = self.family, self.params
        with np.errstate(all="ignore"):
            if f == "normal":
                return p[0] + np.sqrt(p[1]) * special.ndtri_exp(logp)
            q = -np.expm1(logp)  # 1 - p
            if f == "exponential":
                return -np.log1p(-np.exp(logp)) / p[0]
            if f == "weibull":
                k, lam = p
                return lam * (-np.log1p(-np.exp(logp))) ** (1.0 / k)
            if f == "triangular":
                a, m, b = p
                fm = (m - a) / (b - a)
                pp = np.exp(logp)
                lo = a + np.sqrt(pp * (b - a) * (m - a))
                hi = b - np.sqrt(q * (b - a) * (b - m))
                return np.where(pp <= fm, lo, hi)
            k, s = p
            return s * np.exp(-np.log(q) / k)

    def isf_log(self, logq):
        """Quantile at upper-tail probability ``q = exp(logq)``."""
        logq = np.asarray(logq, dtype=float)
        f, p = self.family, self.params
        with np.errstate(all="ignore"):
            if f == "normal":
                return p[0] - np.sqrt(p[1]) * special.ndtri_exp(logq)
            if f == "exponential":
                return -logq / p[0]
            if f == "weibull":
                k, lam = p
                return lam * (-logq) ** (1.0 / k)
            if f == "triangular":
                a, m, b = p
                fm = (m - a) / (b - a)
                qq = np.exp(logq)
                lo = a + np.sqrt(-np.expm1(logq) * (b - a) * (m - a))
                hi = b - np.sqrt(qq * (b - a) * (b - m))
                return np.where(qq >= 1.0 - fm, lo, hi)
            k, s = p
            return s * np.exp(-logq / k)

    def ppf(self, p):
        p = np.asarray(p, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(p <= 0.5, self.ppf_log(np.log(p)), self.isf_log(np.log1p(-p)))

    def isf(self, q):
        q = np.asarray(q, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(q <= 0.5, self.isf_log(np.log(q)), self.ppf_log(np.log1p(-q)))

    def sample(self, rng, size=None):
        rng = as_generator(rng)
        u = _open_uniform(rng, size)
        out = self.ppf(u)
        return float(out) if size is None else out


def marginal_cdf(m, x):
    """Cdf of marginal ``m`` at ``x``."""
    out = m.cdf(x)
    return float(out) if np.ndim(out) == 0 else out


def marginal_quantile(m, p):
    """Quantile of marginal ``m``; ``p`` must lie in (0, 1)."""
    arr = np.asarray(p, dtype=float)
    if np.any(~((arr > 0.0) & (arr < 1.0))):
        raise ValueError("marginal quantile requires p in (0, 1)")
    out = m.ppf(arr)
    return float(out) if np.ndim(out) == 0 else out
