"""Importance-sampling estimators and the batch runner.

Every ``draw_*`` function returns one weighted sample per draw (``size=None``
gives a float, otherwise an array). The transverse coordinates of the E, L,
O and eN proposals are standard normal, so their density ratio cancels and
only the first aligned coordinate contributes to the weight.
"""

import time
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

from .densities import RngStream, as_generator, shifted_exp_logpdf, std_normal_logpdf
from .dominating import DominatingSet
from .errors import ConfigError, NumericalError

KINDS = ("AR", "N", "O", "E", "L", "eN")


def optimal_theta(s):
    """Minimiser ``1 / (1 + s)`` of the limiting second moment of the O estimator."""
    if s < 0:
        raise ValueError("s must be non-negative")
    return 1.0 / (1.0 + s)


# ---------------------------------------------------------------------------
# exact accumulator

_OFFSET = 1126  # every finite double is an integer multiple of 2**-1126 after frexp splitting
_LOW = (1 << 26) - 1
_CHUNK = 1 << 24


def _exact_sum(x):
    """Exact sum of float64 values as an integer multiple of ``2**-_OFFSET``."""
    total = 0
    for start in range(0, x.size, _CHUNK):
        m, e = np.frexp(x[start:start + _CHUNK])
        mant = (m * 2.0**53).astype(np.int64)
        expo = e.astype(np.int64) + (_OFFSET - 53)
        neg = mant < 0
        mag = np.abs(mant)
        hi = (mag >> 26).astype(np.float64)
        lo = (mag & _LOW).astype(np.float64)
        hi[neg] *= -1.0
        lo[neg] *= -1.0
        ue, inv = np.unique(expo, return_inverse=True)
        # per-exponent sums stay below 2**53, so the float bincount is exact
        sh = np.bincount(inv, weights=hi)
        sl = np.bincount(inv, weights=lo)
        for k, ex in enumerate(ue.tolist()):
            total += ((int(sh[k]) << 26) + int(sl[k])) << ex
    return total


class EstimateAccumulator:
    """Streaming count, sum and sum of squares with exact integer arithmetic.

    Merging (``+``) is integer addition, hence exactly associative and
    commutative; read-outs are correctly rounded.
    """

    __slots__ = ("n", "_s", "_q")

    def __init__(self, n=0, _s=0, _q=0):
        self.n = int(n)
        self._s = _s
        self._q = _q

    def add(self, values):
        v = np.asarray(values, dtype=np.float64).ravel()
        if v.size == 0:
            return self
        if not np.all(np.isfinite(v)):
            raise NumericalError("non-finite estimator value")
        with np.errstate(over="ignore"):
            sq = v * v
        if not np.all(np.isfinite(sq)):
            raise NumericalError("estimator value overflows when squared")
        self.n += v.size
        self._s += _exact_sum(v)
        self._q += _exact_sum(sq)
        return self

    def merge(self, other):
        return EstimateAccumulator(self.n + other.n, self._s + other._s, self._q + other._q)

    __add__ = merge

    def __eq__(self, other):
        return (isinstance(other, EstimateAccumulator) and self.n == other.n
                and self._s == other._s and self._q == other._q)

    @property
    def sum(self):
        return self._s / (1 << _OFFSET)

    @property
    def sum_sq(self):
        return self._q / (1 << _OFFSET)

    @property
    def mean(self):
        return self._s / (self.n << _OFFSET) if self.n else float("nan")

    @property
    def second_moment(self):
        return self._q / (self.n << _OFFSET) if self.n else float("nan")

    @property
    def variance(self):
        """Per-draw population variance, computed exactly before rounding."""
        if not self.n:
            return float("nan")
        num = self._q * self.n * (1 << _OFFSET) - self._s * self._s
        return max(num, 0) / ((self.n * self.n) << (2 * _OFFSET))

    @property
    def relative_error(self):
        m = self.mean
        if not self.n or m == 0:
            return float("nan")
        return float(np.sqrt(self.variance) / (abs(m) * np.sqrt(self.n)))


# ---------------------------------------------------------------------------
# draws


def _cost(h, Z, keep):
    """``h(Z) 1{keep}``; a vector-valued ``h`` gives an ``(m, k)`` array."""
    if h is None:
        return keep.astype(float)
    vals = np.asarray(h(Z[keep]), dtype=float)
    out = np.zeros((Z.shape[0],) + vals.shape[1:])
    out[keep] = vals
    return out


def _weighted(w, c):
    return w.reshape(w.shape + (1,) * (c.ndim - 1)) * c


def _ret(vals, size):
    return float(vals[0]) if size is None else vals


def draw_AR(S, h, rng, size=None):
    """``h(Z) 1{Z in S}`` with ``Z`` standard normal."""
    rng = as_generator(rng)
    m = 1 if size is None else int(size)
    Z = rng.standard_normal((m, S.dim))
    return _ret(_cost(h, Z, S.member(Z)), size)


def draw_N(S, h, shift, rng, size=None):
    """Mean-shift estimator ``h 1_S phi(Z) / phi(Z - mu)`` with ``Z ~ N(mu, I)``."""
    rng = as_generator(rng)
    mu = np.asarray(shift, dtype=float)
    if mu.shape != (S.dim,):
        raise ValueError(f"shift must have length {S.dim}")
    m = 1 if size is None else int(size)
    Z = mu + rng.standard_normal((m, S.dim))
    keep = S.member(Z)
    w = np.exp(-(Z @ mu) + 0.5 * (mu @ mu))
    return _ret(_weighted(w, _cost(h, Z, keep)), size)


def draw_O(constants, z1star, theta, rng, d, size=None, lam=None):
    """Full-information estimator.

    ``W ~ z1* + Exp(lambda)`` with ``lambda = theta z1*`` (or an explicit
    ``lam``) and value
    ``(2 pi)^{-(d-1)/2} phi(W) / f(W) eta z1*^p (W - z1*)^s``.
    """
    if lam is None:
        if not 0 < theta < 2:
            raise ValueError(f"theta must lie in (0, 2), got {theta}")
        lam = theta * z1star
    if not lam > 0:
        raise ValueError("rate must be positive")
    rng = as_generator(rng)
    m = 1 if size is None else int(size)
    t = rng.standard_exponential(m) / lam
    W = z1star + t
    p = constants.c[0] if constants.c else 0
    logc = (-(d - 1) / 2.0 * np.log(2 * np.pi) + np.log(constants.eta)
            + (p * np.log(z1star) if p else 0.0))
    logw = std_normal_logpdf(W) - (np.log(lam) - lam * t)
    with np.errstate(divide="ignore"):
        vals = np.exp(logc + logw) * (t ** constants.s if constants.s else 1.0)
    return _ret(vals, size)


def _default_dom(S, z1star, dom):
    if dom is not None:
        return dom
    z = S.z1star if z1star is None else z1star
    if z is None or not z > 0:
        raise ValueError("rarity z1* must be positive")
    return DominatingSet.aligned(z, S.dim)


def draw_E(S, h, z1star, rng, size=None, dom=None):
    """Partial-information estimator with a shifted-exponential first coordinate.

    For several dominating points the proposal is the ``nu``-mixture of the
    per-point shifted exponentials and the weight is the mixture density
    ratio, which is unbiased when ``S`` lies in the union of the supporting
    halfspaces.
    """
    if z1star is not None and not z1star > 0:
        raise ValueError("rarity z1* must be positive")
    dom = _default_dom(S, z1star, dom)
    rng = as_generator(rng)
    m = 1 if size is None else int(size)
    comp = dom.pick(rng, m)
    r = dom.norms[comp]
    W = np.empty((m, S.dim))
    W[:, 0] = r + rng.standard_exponential(m) / r
    W[:, 1:] = rng.standard_normal((m, S.dim - 1))
    Z = dom.unalign(W, comp)
    if len(dom) == 1:
        logw = std_normal_logpdf(W[:, 0]) - shifted_exp_logpdf(W[:, 0], r[0], r[0])
    else:
        proj = Z @ dom.directions().T
        with np.errstate(divide="ignore"):
            terms = [np.log(nu) + shifted_exp_logpdf(proj[:, k], dom.norms[k], dom.norms[k])
                     - std_normal_logpdf(proj[:, k]) for k, nu in enumerate(dom.weights)]
        logw = -special.logsumexp(np.column_stack(terms), axis=1)
    return _ret(_weighted(np.exp(logw), _cost(h, Z, S.member(Z))), size)


def _laplace_mixture(S, h, dom, rng, size):
    rng = as_generator(rng)
    m = 1 if size is None else int(size)
    Z, comp, W = dom.sample_laplace(rng, m)
    r = dom.norms[comp]
    logw = std_normal_logpdf(W[:, 0]) - (np.log(0.5 * r) - r * np.abs(W[:, 0] - r))
    return _ret(_weighted(np.exp(logw), _cost(h, Z, S.member(Z))), size)


def draw_L(S, h, z1star, rng, size=None, dom=None):
    """Laplace-proposal estimator centred at ``z1*`` with rate ``z1*``."""
    if z1star is not None and not z1star > 0:
        raise ValueError("rarity z1* must be positive")
    return _laplace_mixture(S, h, _default_dom(S, z1star, dom), rng, size)


def draw_eN(S_z, h, dom, rng, size=None):
    """Laplace mixture over a dominating set; component ``K ~ nu``.

    Returns ``(phi / f_L)(W1) h(R_K' W) 1{R_K' W in S_z}`` for the sampled
    component, which is unbiased because every component has full support.
    """
    if dom is None or len(dom) == 0:
        raise ConfigError("eN needs a non-empty dominating set")
    return _laplace_mixture(S_z, h, dom, rng, size)


# ---------------------------------------------------------------------------
# configuration


@dataclass
class EstimatorConfig:
    """Estimator kind plus the structural data it relies on."""

    kind: str
    theta: float = None
    lam: float = None
    dominating: DominatingSet = None
    constants: object = None
    cost: object = None
    shift: np.ndarray = None
    hyperplane: bool = False

    def validate(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown estimator {self.kind!r}; expected one of {KINDS}")
        if self.kind == "O":
            if self.constants is None:
                raise ConfigError("O needs structural constants (eta, s, p)")
            if self.dominating is None or len(self.dominating) != 1:
                raise ConfigError("O needs a unique dominating point")
            if not self.hyperplane:
                raise ConfigError("O needs the supporting-hyperplane condition")
        if self.kind == "E":
            if self.dominating is None:
                raise ConfigError("E needs a dominating point")
            if not self.hyperplane:
                raise ConfigError("E needs the supporting-hyperplane condition")
        if self.kind in ("L", "eN") and self.dominating is None:
            raise ConfigError(f"{self.kind} needs dominating-point data")
        if self.kind == "N" and self.shift is None and self.dominating is None:
            raise ConfigError("N needs a mean-shift vector")
        return self

    def sampler(self, S):
        """``f(rng, size) -> array`` drawing this estimator on set ``S``."""
        self.validate()
        h, dom = self.cost, self.dominating
        if self.kind == "AR":
            return lambda rng, m: draw_AR(S, h, rng, m)
        if self.kind == "N":
            mu = self.shift if self.shift is not None else dom.points[int(np.argmin(dom.norms))]
            return lambda rng, m: draw_N(S, h, mu, rng, m)
        if self.kind == "O":
            z = dom.radius
            th = self.theta if self.theta is not None else optimal_theta(self.constants.s)
            return lambda rng, m: draw_O(self.constants, z, th, rng, S.dim, m, lam=self.lam)
        if self.kind == "E":
            return lambda rng, m: draw_E(S, h, None, rng, m, dom=dom)
        if self.kind == "L":
            return lambda rng, m: draw_L(S, h, None, rng, m, dom=dom)
        return lambda rng, m: draw_eN(S, h, dom, rng, m)


# ---------------------------------------------------------------------------
# runner


@dataclass
class EstimateResult:
    n: int
    mean: float
    se: float
    ci_lo: float
    ci_hi: float
    re: float
    second_moment: float
    second_moment_ratio: float
    batches: int
    wall_time: float = 0.0
    accumulator: EstimateAccumulator = field(default=None, repr=False)
    batch_accumulators: list = field(default=None, repr=False)

    def to_dict(self):
        return {k: getattr(self, k) for k in ("n", "mean", "se", "ci_lo", "ci_hi", "re",
                                              "second_moment", "second_moment_ratio", "batches")}


def _summarise(batch_accs, alpha, level, wall):
    total = batch_accs[0]
    for a in batch_accs[1:]:
        total = total + a
    mean = total.mean
    B = len(batch_accs)
    if B >= 2:
        bm = np.array([a.mean for a in batch_accs])
        bn = np.array([a.n for a in batch_accs], dtype=float)
        # weighted batch means (batches differ by at most one draw)
        var = np.sum(bn * (bm - mean) ** 2) / (B - 1) / bn.mean()
        se = float(np.sqrt(var / B))
        q = stats.t.ppf(0.5 + level / 2.0, B - 1)
    else:
        se = float(np.sqrt(total.variance / total.n))
        q = stats.norm.ppf(0.5 + level / 2.0)
    ref = alpha if alpha is not None else mean
    m2 = total.second_moment
    ratio = m2 / ref**2 if ref else float("nan")
    re = se / abs(mean) if mean else float("nan")
    return EstimateResult(total.n, mean, se, mean - q * se, mean + q * se, re, m2, ratio, B,
                          wall, total, batch_accs)


def run_estimator(sampler, n, batches=32, seed=0, alpha=None, level=0.95, chunk=1 << 18):
    """Run ``n`` draws split over ``batches`` independent substreams.

    Batch ``b`` uses ``RngStream(seed, b)``; its draws are accumulated exactly,
    and the batch accumulators are merged. If the sampler returns a 2-D array
    every column is summarised separately and a list of results is returned.

    Parameters
    ----------
    sampler : callable ``(rng, size) -> ndarray``
    n : int
        Total number of draws.
    batches : int
        Number of batches for the batch-means confidence interval.
    alpha : float or sequence, optional
        Reference value(s) for the second-moment ratio; defaults to the estimate.
    """
    n, batches = int(n), int(batches)
    if n < 1 or batches < 1:
        raise ValueError("need n >= 1 and batches >= 1")
    batches = min(batches, n)
    t0 = time.perf_counter()
    accs = None
    for b in range(batches):
        rng = RngStream(seed, b).generator()
        todo = n // batches + (1 if b < n % batches else 0)
        while todo > 0:
            m = min(chunk, todo)
            vals = np.asarray(sampler(rng, m), dtype=float)
            cols = vals.reshape(m, -1)
            if accs is None:
                accs = [[EstimateAccumulator() for _ in range(batches)] for _ in range(cols.shape[1])]
            for j in range(cols.shape[1]):
                accs[j][b].add(cols[:, j])
            todo -= m
    wall = time.perf_counter() - t0
    alphas = alpha if isinstance(alpha, (list, tuple)) else [alpha] * len(accs)
    out = [_summarise(a, al, level, wall) for a, al in zip(accs, alphas)]
    return out[0] if len(out) == 1 else out
