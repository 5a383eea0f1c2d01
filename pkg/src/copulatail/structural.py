"""Curvature constants ``(eta, s)`` of polynomial boundaries.

The exponent ``s`` comes from the scaling LP

    minimise   sum_j (c_j + 1) x_j
    subject to sum_j nu_j x_j >= 1   for every boundary monomial nu,
               x >= 0,

solved exactly in rational arithmetic. ``eta`` integrates the cost weight
over the limit cross-section obtained by keeping the tight monomials.
"""

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import integrate

from .densities import as_generator


@dataclass
class StructuralConstants:
    s: float
    eta: float
    c: tuple
    x_star: tuple = ()
    eta_se: float = 0.0
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return {"s": float(self.s), "eta": float(self.eta), "c": list(self.c),
                "x_star": [float(x) for x in self.x_star], "eta_se": float(self.eta_se)}


# ---------------------------------------------------------------------------
# exact simplex

def _simplex_max(A, b, obj):
    """Maximise ``obj . y`` s.t. ``A y <= b``, ``y >= 0`` with ``b >= 0``.

    Dense tableau over Fractions, Bland's rule. Returns ``(value, y, duals)``
    where ``duals`` are the slack reduced costs (the solution of the dual LP).
    Returns ``None`` when unbounded.
    """
    m, n = len(A), len(obj)
    tab = [[Fraction(v) for v in A[i]] + [Fraction(int(i == k)) for k in range(m)] + [Fraction(b[i])]
           for i in range(m)]
    z = [-Fraction(v) for v in obj] + [Fraction(0)] * m + [Fraction(0)]
    basis = [n + i for i in range(m)]
    while True:
        enter = next((j for j in range(n + m) if z[j] < 0), None)
        if enter is None:
            break
        best, leave = None, None
        for i in range(m):
            if tab[i][enter] > 0:
                ratio = tab[i][-1] / tab[i][enter]
                if best is None or ratio < best or (ratio == best and basis[i] < basis[leave]):
                    best, leave = ratio, i
        if leave is None:
            return None
        piv = tab[leave][enter]
        tab[leave] = [v / piv for v in tab[leave]]
        for i in range(m):
            if i != leave and tab[i][enter] != 0:
                f = tab[i][enter]
                tab[i] = [a - f * c for a, c in zip(tab[i], tab[leave])]
        f = z[enter]
        z = [a - f * c for a, c in zip(z, tab[leave])]
        basis[leave] = enter
    y = [Fraction(0)] * n
    for i, bv in enumerate(basis):
        if bv < n:
            y[bv] = tab[i][-1]
    return z[-1], y, z[n:n + m]


def solve_structural_lp(boundary_exponents, cost_exponents):
    """Exact solution of the scaling LP.

    Parameters
    ----------
    boundary_exponents : sequence of sequence of int
        Exponent vectors ``nu`` over coordinates 2..d.
    cost_exponents : sequence of int
        Either ``(c_2..c_d)`` or the full ``(p, c_2..c_d)``.

    Returns
    -------
    x_star : tuple of Fraction
    s : Fraction
    """
    C = [tuple(int(e) for e in nu) for nu in boundary_exponents]
    if not C:
        raise ValueError("no boundary exponents given")
    k = len(C[0])
    if any(len(nu) != k for nu in C):
        raise ValueError("boundary exponent vectors differ in length")
    c = [int(e) for e in cost_exponents]
    if len(c) == k + 1:
        c = c[1:]
    if len(c) != k:
        raise ValueError(f"cost exponents must have length {k} or {k + 1}")
    for nu in C:
        if min(nu) < 0:
            raise ValueError(f"negative boundary exponent in {nu}")
        if max(nu) <= 0:
            raise ValueError(f"LP infeasible: boundary term {nu} has no positive exponent")
    w = [Fraction(cj + 1) for cj in c]
    # dual: max sum(y) s.t. sum_nu nu_j y_nu <= w_j
    A = [[Fraction(nu[j]) for nu in C] for j in range(k)]
    res = _simplex_max(A, w, [1] * len(C))
    if res is None:
        raise ValueError("LP infeasible")
    value, _, x = res
    return tuple(x), value


def lp_certificate(boundary_exponents, cost_exponents, x_star, s):
    """Check feasibility, objective value and complementary slackness of ``x_star``."""
    C = [tuple(int(e) for e in nu) for nu in boundary_exponents]
    c = list(cost_exponents)
    if len(c) == len(x_star) + 1:
        c = c[1:]
    x = [Fraction(v) for v in x_star]
    if any(v < 0 for v in x):
        return False
    lhs = [sum(Fraction(nu[j]) * x[j] for j in range(len(x))) for nu in C]
    if any(v < 1 for v in lhs):
        return False
    if sum(Fraction(cj + 1) * xj for cj, xj in zip(c, x)) != Fraction(s):
        return False
    for j, xj in enumerate(x):
        if xj > 0 and not any(v == 1 and nu[j] > 0 for v, nu in zip(lhs, C)):
            return False
    return True


def tight_terms(boundary, x_star):
    """Boundary terms whose scaled exponent equals one."""
    out = []
    for a, nu in boundary.terms:
        if sum(Fraction(e) * Fraction(x) for e, x in zip(nu, x_star)) == 1:
            out.append((a, nu))
    return out


def limit_set_bounded(boundary, x_star):
    """Whether the limit set is bounded.

    A sum of positive monomials stays bounded along the ``z_j`` axis only if
    some tight term is an even power of ``z_j`` alone, and it is bounded
    when every coordinate has such a term.
    Returns ``(bounded, first_free_coordinate_or_None)`` with 0-based
    coordinates over ``z2..zd``.
    """
    terms = tight_terms(boundary, x_star)
    for j in range(boundary.dim_rest):
        pure = any(nu[j] > 0 and nu[j] % 2 == 0 and sum(nu) == nu[j] for _, nu in terms)
        if not pure:
            return False, j
    return True, None


def limit_set_predicate(boundary, x_star):
    """``{zt : sum over tight terms a prod zt_j^nu_j <= 1}``."""
    terms = tight_terms(boundary, x_star)

    def pred(zt):
        zt = np.atleast_2d(np.asarray(zt, dtype=float))
        val = np.zeros(zt.shape[0])
        for a, nu in terms:
            val += a * np.prod(zt ** np.asarray(nu, dtype=float), axis=1)
        return val <= 1.0
    return pred


# ---------------------------------------------------------------------------
# eta

def _weight(pts, c):
    w = np.ones(pts.shape[0])
    for j, e in enumerate(c):
        if e:
            w *= pts[:, j] ** e
    return w


def estimate_eta(pred, cost_exponents, dim, rng=None, n=10**6, gamma=1.0,
                 max_halvings=12, probe=20000):
    """Monte Carlo estimate of ``gamma * int_{pred} prod zt_j^{c_j}``.

    The integration box is doubled until its outer shell carries no visible
    mass; mass that keeps appearing there is reported as an unbounded set.

    Returns ``(eta, std_err)``.
    """
    rng = as_generator(rng)
    c = [int(e) for e in cost_exponents]
    if len(c) == dim + 1:
        c = c[1:]
    if len(c) != dim:
        raise ValueError("cost exponent length does not match dimension")

    def mc(width, m, shell=False):
        pts = rng.uniform(-width, width, size=(m, dim))
        vol = (2 * width) ** dim
        if shell:
            # outer shell of the box: max |z_j| > width / 2
            inside = np.max(np.abs(pts), axis=1) <= width / 2
            pts[inside] = 0.0
            vals = np.where(~inside & pred(pts), _weight(pts, c), 0.0) * vol
        else:
            vals = np.where(pred(pts), _weight(pts, c), 0.0) * vol
        return vals.mean(), vals.std(ddof=1) / np.sqrt(m)

    width = 1.0
    for _ in range(max_halvings):
        inner, _ = mc(width, probe)
        outer, outer_se = mc(2 * width, probe, shell=True)
        # an outer shell carrying real mass means the set keeps going
        if abs(outer) + 3 * outer_se <= 0.01 * abs(inner):
            break
        width *= 2
    else:
        raise ValueError("limit set appears unbounded: mass keeps appearing at the box edge")
    est, se = mc(2 * width, int(n))
    return gamma * est, abs(gamma) * se


def structural_constants(boundary, cost_exponents, rng=None, n=10**6, gamma=1.0):
    """``StructuralConstants`` for a :class:`PolynomialBoundary` and monomial cost."""
    x_star, s = solve_structural_lp(boundary.exponents, cost_exponents)
    c = tuple(int(e) for e in cost_exponents)
    bounded, j = limit_set_bounded(boundary, x_star)
    if not bounded:
        raise ValueError(f"limit set is unbounded along z{j + 2}: no tight pure even power")
    pred = limit_set_predicate(boundary, x_star)
    eta, se = estimate_eta(pred, c, boundary.dim_rest, rng=rng, n=n, gamma=gamma)
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta}")
    return StructuralConstants(s=float(s), eta=float(eta), c=c, x_star=tuple(x_star), eta_se=se,
                               extra={"s_exact": str(s), "x_exact": [str(x) for x in x_star]})


# ---------------------------------------------------------------------------
# v_p(t) diagnostics

def cross_section_integral(S, t, cost_exponents=(), box=10.0, epsrel=1e-9):
    """``int_{S(t)} prod z_j^{c_j} dz_rest`` by nested quadrature (d - 1 <= 2).

    Returns ``(value, unbounded)`` where ``unbounded`` flags a cross-section
    that reaches the truncation box.
    """
    from .oracles import feasible_intervals

    k = S.dim - 1
    if k not in (1, 2):
        raise ValueError("cross-section quadrature supports d - 1 in {1, 2}")
    c = list(cost_exponents) + [0] * (k - len(cost_exponents))
    pred = S.cross_section(t)
    hit = {"edge": False}

    def line(fixed):
        def g(x):
            x = np.atleast_1d(x)
            pts = np.column_stack([np.broadcast_to(v, x.shape) for v in fixed] + [x])
            return np.where(pred(pts), 0.5, -0.5)
        ivs = feasible_intervals(g, -box, box)
        tot = 0.0
        for lo, hi in ivs:
            if lo <= -box or hi >= box:
                hit["edge"] = True
            lo, hi = max(lo, -box), min(hi, box)
            e = c[len(fixed)]
            tot += (hi ** (e + 1) - lo ** (e + 1)) / (e + 1)
        return tot

    if k == 1:
        val = line([])
    else:
        def outer(z2):
            inner = line([z2])
            return inner * (z2 ** c[0] if c[0] else 1.0)
        lim = box
        val, _ = integrate.quad(outer, -lim, lim, epsabs=0, epsrel=epsrel, limit=400,
                                points=[0.0])
    return val, hit["edge"]


def volume_expansion_check(S, constants, t_grid, cost_exponents=()):
    """Max of ``|v_p(t) / (eta t^s) - 1|`` over ``t_grid``.

    Returns a dict with the per-``t`` values, the max deviation, the fitted
    log-log slope and an ``unbounded`` failure flag.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    vals, unb = [], False
    for t in t_grid:
        v, edge = cross_section_integral(S, t, cost_exponents)
        vals.append(v)
        unb = unb or edge
    vals = np.array(vals)
    out = {"t": t_grid.tolist(), "v": vals.tolist(), "unbounded": unb}
    if unb or np.any(vals <= 0):
        out.update(max_deviation=np.inf, slope=np.nan, ok=False)
        return out
    pred = constants.eta * t_grid ** constants.s
    dev = np.abs(vals / pred - 1.0)
    slope = np.polyfit(np.log(t_grid), np.log(vals), 1)[0] if t_grid.size > 1 else np.nan
    out.update(max_deviation=float(dev.max()), deviations=dev.tolist(), slope=float(slope), ok=True)
    return out
