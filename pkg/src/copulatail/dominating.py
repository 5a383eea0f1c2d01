"""Dominating points: nearest feasible points to the origin and their discovery by sampling."""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.cluster.vq import kmeans2
from scipy.spatial.distance import cdist, directed_hausdorff

from .densities import _open_uniform, as_generator
from .errors import InfeasibleError
from .geometry import make_rotation


class DominatingSet:
    """Points ``z*_k`` with alignments ``R_k`` and mixture weights ``nu_k``.

    ``rotations[k].R`` sends ``z*_k`` to ``|z*_k| e1``; samples drawn in the
    aligned frame are mapped back with ``rotations[k].unalign``.
    """

    def __init__(self, points, weights=None):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[0] == 0:
            raise ValueError("dominating set is empty")
        norms = np.linalg.norm(pts, axis=1)
        if np.any(norms <= 0):
            raise ValueError("dominating points must be non-zero")
        if weights is None:
            w = np.full(pts.shape[0], 1.0 / pts.shape[0])
        else:
            w = np.asarray(weights, dtype=float)
            if w.shape != (pts.shape[0],) or np.any(w <= 0):
                raise ValueError("weights must be positive, one per point")
            if abs(w.sum() - 1.0) > 1e-12:
                raise ValueError("weights must sum to one")
        self.points = pts
        self.norms = norms
        self.weights = w
        self.rotations = [make_rotation(p) for p in pts]

    @classmethod
    def aligned(cls, z1star, d):
        """Single point ``(z1*, 0, ..., 0)``."""
        p = np.zeros(int(d))
        p[0] = float(z1star)
        return cls(p[None, :])

    @property
    def radius(self):
        return float(self.norms.min())

    @property
    def dim(self):
        return self.points.shape[1]

    def __len__(self):
        return self.points.shape[0]

    def directions(self):
        return self.points / self.norms[:, None]

    def pick(self, rng, size):
        if len(self) == 1:
            return np.zeros(size, dtype=np.intp)
        u = _open_uniform(rng, size)
        return np.minimum(np.searchsorted(np.cumsum(self.weights), u, side="right"), len(self) - 1)

    def unalign(self, W, comp):
        """Map aligned-frame rows ``W`` of component ``comp`` back to z-space."""
        Z = np.empty_like(W)
        for k, rot in enumerate(self.rotations):
            idx = comp == k
            if np.any(idx):
                Z[idx] = rot.unalign(W[idx])
        return Z

    def sample_laplace(self, rng, size, rate_scale=1.0, normal_scale=1.0):
        """Mixture draws: first aligned coordinate Laplace about ``|z*_k|``.

        Returns ``(Z, comp, W)``: z-space points, component labels and the
        aligned-frame draws.
        """
        rng = as_generator(rng)
        comp = self.pick(rng, size)
        r = self.norms[comp]
        W = np.empty((size, self.dim))
        u = _open_uniform(rng, size)
        lo = u < 0.5
        step = np.where(lo, np.log(2.0 * np.where(lo, u, 0.25)),
                        -np.log(2.0 - 2.0 * np.where(lo, 0.75, u)))
        W[:, 0] = r + step / (r * rate_scale)
        W[:, 1:] = normal_scale * rng.standard_normal((size, self.dim - 1))
        return self.unalign(W, comp), comp, W

    def to_dict(self):
        return {"points": self.points.tolist(), "weights": self.weights.tolist(),
                "radius": self.radius}

    @classmethod
    def from_dict(cls, data):
        return cls(data["points"], data.get("weights"))


# ---------------------------------------------------------------------------
# nearest point


def _feasible_seeds(S, k, rng, max_draws=2_000_000, batch=20000):
    centers = [np.zeros(S.dim)]
    if S.z1star is not None and S.regime == "translation":
        c = np.zeros(S.dim)
        c[0] = S.z1star
        centers.append(c)
    found = []
    drawn = 0
    scale = 1.0
    while drawn < max_draws:
        for c in centers:
            pts = c + scale * rng.standard_normal((batch, S.dim))
            drawn += batch
            ok = pts[S.member(pts)]
            if ok.size:
                found.append(ok)
        if found and sum(f.shape[0] for f in found) >= k:
            break
        scale *= 1.5
    if not found:
        raise InfeasibleError(f"no feasible point found after {drawn} draws")
    pool = np.concatenate(found)
    order = np.argsort(np.linalg.norm(pool, axis=1))
    near = order[: (k + 1) // 2]
    rest = order[(k + 1) // 2:]
    extra = rng.choice(rest, size=min(k - near.size, rest.size), replace=False) if rest.size else []
    return pool[np.concatenate([near, np.asarray(extra, dtype=np.intp)])]


def _repair(S, z, z_ok, iters=80):
    # move from an infeasible point toward a feasible one until feasible
    if S.member(z):
        return z
    a, b = 0.0, 1.0
    for _ in range(iters):
        m = 0.5 * (a + b)
        if S.member(z + m * (z_ok - z)):
            b = m
        else:
            a = m
    return z + b * (z_ok - z)


def _descent_probe(S, z, step):
    nz = z @ z
    for i in range(z.size):
        for sgn in (1.0, -1.0):
            y = z.copy()
            y[i] += sgn * step
            if y @ y < nz and S.member(y):
                return y
    return None


def _local_min(S, z0):
    cons = [{"type": "ineq", "fun": lambda z: S.constraint_values(z[None, :])[0]}]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = optimize.minimize(lambda z: 0.5 * z @ z, z0, jac=lambda z: z, method="SLSQP",
                                constraints=cons, options={"maxiter": 500, "ftol": 1e-15})
    z = res.x if np.all(np.isfinite(res.x)) else z0
    return _repair(S, z, z0)


def nearest_point(S, multistarts=None, rng=None, probe_step=1e-5, max_draws=2_000_000,
                  return_info=False):
    """Feasible point of smallest Euclidean norm.

    SLSQP from ``multistarts`` (default ``ceil(10 d)``) feasible seeds; the
    best local solution is then checked by probing ``+-step`` along every
    axis, and re-optimised from any feasible descent found.
    """
    rng = as_generator(rng)
    k = int(np.ceil(10 * S.dim)) if multistarts is None else int(multistarts)
    seeds = _feasible_seeds(S, k, rng, max_draws=max_draws)
    best = None
    for z0 in seeds:
        z = _local_min(S, z0)
        if best is None or z @ z < best @ best:
            best = z
    probes = 0
    for _ in range(20):
        y = _descent_probe(S, best, probe_step)
        if y is None:
            break
        probes += 1
        z = _local_min(S, y)
        best = z if z @ z < y @ y else y
    if return_info:
        return best, {"seeds": seeds.shape[0], "descent_restarts": probes,
                      "stationary": _descent_probe(S, best, probe_step) is None}
    return best


# ---------------------------------------------------------------------------
# clustering


@dataclass
class Cluster:
    indices: np.ndarray
    centroid: np.ndarray


def _assign(points, cents):
    return np.argmin(cdist(points, cents), axis=1)


def _lloyd(pts, cents, iters):
    for _ in range(iters):
        lab = _assign(pts, cents)
        new = np.array([pts[lab == j].mean(axis=0) for j in np.unique(lab)])
        if new.shape == cents.shape and np.allclose(new, cents, rtol=0, atol=1e-12):
            return new
        cents = new
    return cents


def cluster(points, C, delta, rng=None, iters=50):
    """At most ``C`` clusters whose centroids are pairwise at least ``delta`` apart.

    k-means++ / Lloyd first, then the closest centroid pair is merged and
    points reassigned until no two centroids are closer than ``delta``.
    """
    rng = as_generator(rng)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] == 0:
        raise ValueError("cannot cluster an empty point set")
    k = min(int(C), np.unique(pts, axis=0).shape[0])
    if k <= 1:
        return [Cluster(np.arange(pts.shape[0]), pts.mean(axis=0))]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        _, labels = kmeans2(pts, k, iter=iters, minit="++", seed=rng)
    cents = np.array([pts[labels == j].mean(axis=0) for j in np.unique(labels)])
    for _ in range(k + 1):
        cents = _lloyd(pts, cents, iters)
        if cents.shape[0] == 1:
            break
        dist = cdist(cents, cents)
        np.fill_diagonal(dist, np.inf)
        i, j = np.unravel_index(np.argmin(dist), dist.shape)
        if dist[i, j] >= delta:
            break
        lab = _assign(pts, cents)
        ni, nj = np.sum(lab == i), np.sum(lab == j)
        merged = (ni * cents[i] + nj * cents[j]) / (ni + nj)
        keep = [m for m in range(cents.shape[0]) if m not in (i, j)]
        cents = np.vstack([cents[keep], merged[None, :]])
    labels = _assign(pts, cents)
    out = []
    for j in np.unique(labels):
        idx = np.nonzero(labels == j)[0]
        out.append(Cluster(idx, pts[idx].mean(axis=0)))
    return out


# ---------------------------------------------------------------------------
# sequential discovery


@dataclass
class EcoNortaParams:
    Delta: int = 50
    C: int = 10
    delta: float = 0.25
    m_k: int = 100
    max_outer: int = 50
    stall_tol: float = 1e-3
    patience: int = 10
    max_widen: int = 5

    def __post_init__(self):
        for name in ("Delta", "C", "m_k", "max_outer", "patience"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        for name in ("delta", "stall_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    def to_dict(self):
        return dict(self.__dict__)


def hausdorff(a, b):
    a, b = np.atleast_2d(a), np.atleast_2d(b)
    return max(directed_hausdorff(a, b)[0], directed_hausdorff(b, a)[0])


def _same_basin(S, p, q, n=21):
    t = np.linspace(0.0, 1.0, n)[:, None]
    return bool(np.all(S.member(p + t * (q - p))))


def _representatives(S, pts, clusters, delta):
    reps = [pts[c.indices[np.argmin(np.linalg.norm(pts[c.indices], axis=1))]] for c in clusters]
    reps.sort(key=lambda r: r @ r)
    kept = []
    for r in reps:
        if any(np.linalg.norm(r - q) < delta or _same_basin(S, q, r) for q in kept):
            continue
        kept.append(r)
    return np.array(kept)


@dataclass
class DiscoveryResult:
    dominating: DominatingSet
    iterations: int
    radii: list = field(default_factory=list)
    converged: bool = False


def econorta_discover(S_z, params=None, z0=None, rng=None, return_result=False):
    """Discover the dominating points of ``S_z`` by iterated mixture sampling.

    Each outer iteration draws ``m_k`` points from the Laplace mixture
    centred on the current estimate set, keeps the ``Delta`` feasible draws
    nearest the origin (together with the current estimates), clusters them,
    and takes the nearest point of each cluster as the new estimate set.
    Estimates that are within ``delta`` of, or joined by a feasible segment
    to, a nearer estimate are dropped. Stops once the set moves less than
    ``stall_tol`` (Hausdorff) for ``patience`` consecutive iterations.
    """
    params = EcoNortaParams() if params is None else params
    rng = as_generator(rng)
    if z0 is None:
        z0 = nearest_point(S_z, rng=rng)
    z0 = np.atleast_2d(np.asarray(z0, dtype=float))
    if not np.all(S_z.member(z0)):
        raise ValueError("initial guess is not feasible")
    est = z0
    radii = [float(np.linalg.norm(est, axis=1).min())]
    rate_scale, normal_scale, widen = 1.0, 1.0, 0
    stall, it, converged = 0, 0, False
    while it < params.max_outer:
        dom = DominatingSet(est)
        Z, _, _ = dom.sample_laplace(rng, params.m_k, rate_scale, normal_scale)
        feas = Z[S_z.member(Z)]
        if feas.shape[0] == 0:
            widen += 1
            if widen > params.max_widen:
                raise InfeasibleError("no feasible samples after widening the proposal")
            rate_scale *= 0.5
            normal_scale *= 2.0
            continue
        widen = 0
        it += 1
        feas = feas[np.argsort(np.linalg.norm(feas, axis=1))[: params.Delta]]
        cand = np.vstack([est, feas])
        cl = cluster(cand, params.C, params.delta, rng)
        new = _representatives(S_z, cand, cl, params.delta)
        moved = hausdorff(new, est)
        est = new
        radii.append(float(np.linalg.norm(est, axis=1).min()))
        if moved < params.stall_tol:
            stall += 1
            if stall >= params.patience:
                converged = True
                break
        else:
            stall = 0
    norms = np.linalg.norm(est, axis=1)
    est = est[norms <= norms.min() + params.delta]
    dom = DominatingSet(est)
    if return_result:
        return DiscoveryResult(dom, it, radii, converged)
    return dom
