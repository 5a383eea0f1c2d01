"""Feasible sets ``{z : l_i(z) >= 0 for all i}``, polynomial costs and the CTO scenario."""

import numpy as np

from .densities import as_generator

REGIMES = ("translation", "scaling", "fixed")


class PolynomialBoundary:
    """Descriptor of ``{z1 - z1* >= sum_k a_k prod_{j>=2} z_j^{nu_kj}}``.

    ``terms`` is a list of ``(a_k, nu_k)`` with ``nu_k`` an exponent vector over
    coordinates 2..d. Only this form feeds the structural LP.
    """

    def __init__(self, terms):
        self.terms = [(float(a), tuple(int(e) for e in nu)) for a, nu in terms]
        if not self.terms:
            raise ValueError("boundary needs at least one term")
        lens = {len(nu) for _, nu in self.terms}
        if len(lens) != 1:
            raise ValueError("boundary exponent vectors differ in length")
        for a, nu in self.terms:
            if a <= 0:
                raise ValueError(f"boundary coefficients must be positive, got {a}")
            if min(nu) < 0:
                raise ValueError(f"negative exponent in {nu}")
        self.dim_rest = lens.pop()

    @property
    def exponents(self):
        return [nu for _, nu in self.terms]

    def __call__(self, zrest):
        zrest = np.asarray(zrest, dtype=float)
        out = np.zeros(zrest.shape[:-1])
        for a, nu in self.terms:
            out = out + a * np.prod(zrest ** np.asarray(nu, dtype=float), axis=-1)
        return out


class PolynomialCost:
    """``h(z) = sum_i g_i z1^{e_i1} ... zd^{e_id}``.

    Parameters
    ----------
    terms : list of (float, sequence of int)
        Coefficient and exponent vector of every monomial.
    """

    def __init__(self, terms):
        self.terms = [(float(g), tuple(int(e) for e in ex)) for g, ex in terms]
        if not self.terms:
            raise ValueError("cost needs at least one term")
        lens = {len(ex) for _, ex in self.terms}
        if len(lens) != 1:
            raise ValueError("cost exponent vectors differ in length")
        if any(min(ex) < 0 for _, ex in self.terms):
            raise ValueError("cost exponents must be non-negative")
        self.dim = lens.pop()

    @classmethod
    def one(cls, d):
        return cls([(1.0, (0,) * d)])

    @property
    def p(self):
        return max(ex[0] for _, ex in self.terms)

    @property
    def is_constant(self):
        return all(max(ex) == 0 for _, ex in self.terms)

    @property
    def leading_exponents(self):
        """Exponent vector of the single monomial (needed by the rate formulas)."""
        if len(self.terms) != 1:
            raise ValueError("leading exponents are defined for single-term costs only")
        return self.terms[0][1]

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        if z.shape[-1] != self.dim:
            raise ValueError(f"cost expects dimension {self.dim}, got {z.shape[-1]}")
        out = np.zeros(z.shape[:-1])
        for g, ex in self.terms:
            if max(ex) == 0:
                out = out + g
            else:
                out = out + g * np.prod(z ** np.asarray(ex, dtype=float), axis=-1)
        return out

    def to_dict(self):
        return {"terms": [[g, list(ex)] for g, ex in self.terms]}


class MappedCost:
    """``z -> cost(fmap(z))``."""

    def __init__(self, cost, fmap):
        self.cost = cost
        self.fmap = fmap
        self.is_constant = getattr(cost, "is_constant", False)

    def __call__(self, z):
        return self.cost(self.fmap(z))


class ConstraintSet:
    """Closed set ``{z : min_i l_i(u(z)) >= 0}``.

    The constraint callables act on *base* coordinates ``u``. The regime
    decides how ``u`` relates to ``z`` at rarity ``z1star``: translation uses
    ``u = z - z1star e1``, scaling ``u = z / z1star``, fixed ``u = z``.
    Every callable must accept an ``(n, d)`` array and return ``(n,)`` values.
    """

    def __init__(self, constraints, dim, regime="fixed", z1star=None, cost=None,
                 boundary=None, name="set", quad_points=None):
        if regime not in REGIMES:
            raise ValueError(f"regime must be one of {REGIMES}, got {regime!r}")
        if regime != "fixed" and z1star is None:
            raise ValueError(f"{regime} regime needs a rarity z1star")
        if regime == "scaling" and not z1star > 0:
            raise ValueError("scaling regime needs z1star > 0")
        if int(dim) < 1:
            raise ValueError("dimension must be >= 1")
        self.constraints = list(constraints)
        if not self.constraints:
            raise ValueError("at least one constraint is required")
        self.dim = int(dim)
        self.regime = regime
        self.z1star = None if z1star is None else float(z1star)
        self.cost = cost
        self.boundary = boundary
        self.name = name
        # optional breakpoints along the outer axes, used by the quadrature oracle
        self.quad_points = quad_points

    def with_rarity(self, z1star):
        """Same base set at another rarity."""
        if self.regime == "fixed":
            raise ValueError("fixed sets have no rarity parameter")
        out = ConstraintSet(self.constraints, self.dim, self.regime, z1star, self.cost,
                            self.boundary, self.name, self.quad_points)
        return out

    def base_coords(self, z):
        z = np.asarray(z, dtype=float)
        if self.regime == "translation":
            u = z.copy()
            u[..., 0] -= self.z1star
            return u
        if self.regime == "scaling":
            return z / self.z1star
        return z

    def constraint_values(self, z):
        z = np.asarray(z, dtype=float)
        if z.shape[-1] != self.dim:
            raise ValueError(f"point has dimension {z.shape[-1]}, set has {self.dim}")
        flat = z.reshape(-1, self.dim)
        u = self.base_coords(flat)
        vals = np.column_stack([np.asarray(g(u), dtype=float).reshape(-1) for g in self.constraints])
        return vals.reshape(z.shape[:-1] + (len(self.constraints),))

    def margin(self, z):
        """``min_i l_i``; non-finite values count as infeasible."""
        v = self.constraint_values(z).min(axis=-1)
        return np.where(np.isnan(v), -np.inf, v)

    def member(self, z):
        return self.margin(z) >= 0.0

    def __contains__(self, z):
        return bool(self.member(z))

    def cross_section(self, t):
        return cross_section(self, t)


def membership(S, z):
    """True where ``z`` is feasible. Accepts one point or an ``(n, d)`` batch."""
    out = S.member(z)
    return bool(out) if np.ndim(out) == 0 else out


def cross_section(S, t):
    """Predicate over ``(z2..zd)`` that is true iff ``(z1* + t, z2, ..., zd)`` is in ``S``."""
    if S.regime != "translation":
        raise ValueError("cross sections are only exposed for translation-form sets")
    if t < 0:
        raise ValueError(f"cross-section offset must be >= 0, got {t}")

    def pred(zrest):
        zrest = np.asarray(zrest, dtype=float)
        one = zrest.ndim == 1
        zr = np.atleast_2d(zrest)
        z = np.column_stack([np.full(zr.shape[0], S.z1star + t), zr])
        out = S.member(z)
        return bool(out[0]) if one else out
    return pred


def supporting_hyperplane_holds(S, zstar, n=10000, rng=None, max_rounds=200):
    """Monte Carlo check that feasible points ``z0`` satisfy ``zstar . z0 >= |zstar|^2``.

    Feasible points are collected by Gaussian perturbations of ``zstar`` at
    several scales. Returns ``(ok, counterexample_or_None)``.
    """
    rng = as_generator(rng)
    zstar = np.asarray(zstar, dtype=float)
    if not membership(S, zstar):
        raise ValueError("zstar is not feasible")
    r2 = zstar @ zstar
    tol = 1e-12 * max(r2, 1.0)
    scales = np.array([0.05, 0.2, 0.5, 1.0, 2.0, 4.0])
    batch = max(256, n // 4)
    seen = 0
    for _ in range(max_rounds):
        sc = scales[rng.integers(0, scales.size, size=batch)]
        pts = zstar + sc[:, None] * rng.standard_normal((batch, zstar.size))
        pts = pts[S.member(pts)]
        if pts.size:
            pts = pts[: n - seen]
            bad = pts @ zstar < r2 - tol
            if np.any(bad):
                return False, pts[np.argmax(bad)]
            seen += pts.shape[0]
        if seen >= n:
            break
    return True, None


# ---------------------------------------------------------------------------
# set factories

def halfspace(d, z1star):
    """``{z1 >= z1*}``."""
    return ConstraintSet([lambda u: u[:, 0]], d, "translation", z1star, name="halfspace")


def tilted_halfspace(d, level, angle):
    """``{cos(a) z1 + sin(a) z2 >= level}``; straddles ``z1 = level`` when ``a != 0``."""
    if d < 2:
        raise ValueError("tilted halfspace needs d >= 2")
    c, s = np.cos(angle), np.sin(angle)
    return ConstraintSet([lambda u: c * u[:, 0] + s * u[:, 1] - level], d, "fixed",
                         name="tilted_halfspace")


def quadratic_set(d, z1star, A=None):
    """``{z1 >= z1* + 0.5 zr' A zr}`` with ``zr = (z2..zd)``; ``A`` defaults to ``2 I``."""
    d = int(d)
    if d < 2:
        raise ValueError("quadratic set needs d >= 2")
    A = 2.0 * np.eye(d - 1) if A is None else np.asarray(A, dtype=float)
    if A.shape != (d - 1, d - 1):
        raise ValueError(f"A must be {(d - 1, d - 1)}, got {A.shape}")
    if np.any(np.linalg.eigvalsh(0.5 * (A + A.T)) <= 0):
        raise ValueError("A must be positive definite")

    def g(u):
        r = u[:, 1:]
        return u[:, 0] - 0.5 * np.einsum("ni,ij,nj->n", r, A, r)

    boundary = None
    if np.allclose(A, np.diag(np.diag(A))):
        boundary = PolynomialBoundary(
            [(0.5 * A[j, j], tuple(2 if k == j else 0 for k in range(d - 1))) for j in range(d - 1)])
    S = ConstraintSet([g], d, "translation", z1star, boundary=boundary, name="quadratic")
    S.A = A
    return S


def polynomial_set(z1star, boundary):
    """``{z1 - z1* >= boundary(z2..zd)}`` for a :class:`PolynomialBoundary`."""
    if not isinstance(boundary, PolynomialBoundary):
        boundary = PolynomialBoundary(boundary)
    d = boundary.dim_rest + 1
    return ConstraintSet([lambda u: u[:, 0] - boundary(u[:, 1:])], d, "translation", z1star,
                         boundary=boundary, name="polynomial")


def ball_set(center, radius):
    """Closed ball ``{|z - center| <= radius}``."""
    c = np.asarray(center, dtype=float)
    r2 = float(radius) ** 2
    return ConstraintSet([lambda u: r2 - np.sum((u - c) ** 2, axis=1)], c.size, "fixed",
                         name="ball")


def two_lobe_set():
    """Mirrored pair ``{|z2| >= 1 + z1^2}`` with minimisers ``(0, +-1)``."""
    return ConstraintSet([lambda u: np.abs(u[:, 1]) - 1.0 - u[:, 0] ** 2], 2, "fixed",
                         name="two_lobe", quad_points=[[-1.0], [1.0]])


# ---------------------------------------------------------------------------
# capacitated two-period order scenario

def cto_bounds(gamma, means):
    """Upper bounds ``U2 = gamma E[X2]``, ``U3 = gamma E[X3]``."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    return gamma * means[1], gamma * means[2]


def cto_feasible(X, gamma, means):
    """Demand vectors that trigger lost sales.

    Feasible iff ``X2 + 2 X3 >= 3 X1``, ``X2 >= U2`` and ``X3 >= U3``.
    """
    X = np.asarray(X, dtype=float)
    u2, u3 = cto_bounds(gamma, means)
    x1, x2, x3 = X[..., 0], X[..., 1], X[..., 2]
    out = (x2 + 2 * x3 >= 3 * x1) & (x2 >= u2) & (x3 >= u3)
    return bool(out) if out.ndim == 0 else out


def cto_cost(X, U2, U3):
    """Unmet demand ``X2 - f2 + 3 (X3 - f3)`` under the optimal first-period fill.

    ``f3 = min(X3, 1.5 X1, U3)`` and ``f2 = min(3 X1 - 2 f3, X2, U2)``.
    """
    X = np.asarray(X, dtype=float)
    x1, x2, x3 = X[..., 0], X[..., 1], X[..., 2]
    f3 = np.minimum(np.minimum(x3, 1.5 * x1), U3)
    f2 = np.minimum(np.minimum(3 * x1 - 2 * f3, x2), U2)
    out = x2 - f2 + 3 * (x3 - f3)
    return float(out) if out.ndim == 0 else out


def cto_set(gamma, means):
    """The CTO lost-sales region over ``x`` with :func:`cto_cost` attached."""
    u2, u3 = cto_bounds(gamma, means)
    cons = [lambda x: x[:, 1] + 2 * x[:, 2] - 3 * x[:, 0],
            lambda x: x[:, 1] - u2,
            lambda x: x[:, 2] - u3]
    S = ConstraintSet(cons, 3, "fixed", name="cto", cost=lambda x: cto_cost(x, u2, u3))
    S.U2, S.U3 = u2, u3
    return S
