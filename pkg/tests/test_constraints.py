import numpy as np
import pytest

from copulatail.constraints import (ConstraintSet, PolynomialBoundary, PolynomialCost, ball_set,
                                    cross_section, cto_cost, cto_feasible, cto_set, halfspace,
                                    membership, polynomial_set, quadratic_set,
                                    supporting_hyperplane_holds, two_lobe_set)


def test_membership_examples():
    assert membership(halfspace(2, 2.0), [2.0, 0.0])
    S = quadratic_set(3, 3.0)
    assert membership(S, [3.5, 0.5, 0.5])
    assert not membership(S, [3.4, 0.5, 0.5])


def test_membership_dimension_mismatch():
    with pytest.raises(ValueError):
        membership(halfspace(2, 1.0), [1.0, 0.0, 0.0])


def test_nan_constraint_is_infeasible():
    S = ConstraintSet([lambda u: np.full(u.shape[0], np.nan)], 1)
    assert not membership(S, [0.0])


def test_translation_regime_shift():
    rng = np.random.default_rng(0)
    z = rng.uniform(-2, 6, (5000, 3))
    S3 = quadratic_set(3, 3.0)
    S0 = quadratic_set(3, 0.0)
    shifted = z - np.array([3.0, 0.0, 0.0])
    assert np.array_equal(S3.member(z), S0.member(shifted))


def test_scaling_regime():
    base = [lambda u: u[:, 0] - 1.0 - u[:, 1] ** 2]
    S = ConstraintSet(base, 2, "scaling", 2.5)
    S1 = S.with_rarity(1.0)
    z = np.random.default_rng(1).uniform(-5, 8, (5000, 2))
    assert np.array_equal(S.member(z), S1.member(z / 2.5))


def test_regime_validation():
    with pytest.raises(ValueError):
        ConstraintSet([lambda u: u[:, 0]], 2, "translation")
    with pytest.raises(ValueError):
        ConstraintSet([lambda u: u[:, 0]], 2, "rotated", 1.0)
    with pytest.raises(ValueError):
        ConstraintSet([lambda u: u[:, 0]], 2, "scaling", -1.0)


def test_supporting_hyperplane():
    ok, bad = supporting_hyperplane_holds(halfspace(3, 2.0), [2.0, 0, 0], rng=0)
    assert ok and bad is None
    ok, bad = supporting_hyperplane_holds(ball_set([0.0, 0.0], 1.0), [1.0, 0.0], rng=0)
    assert not ok
    assert bad @ np.array([1.0, 0.0]) < 1.0
    ok, _ = supporting_hyperplane_holds(quadratic_set(3, 3.0), [3.0, 0, 0], n=20000, rng=0)
    assert ok
    with pytest.raises(ValueError):
        supporting_hyperplane_holds(halfspace(2, 2.0), [1.0, 0.0])


def test_cross_sections():
    S = quadratic_set(3, 2.0)
    p0 = cross_section(S, 0.0)
    assert p0(np.zeros((1, 2)))[0]
    assert not p0(np.array([[1e-3, 0.0]]))[0]
    p1 = cross_section(S, 1.0)
    pts = np.random.default_rng(2).uniform(-1.5, 1.5, (4000, 2))
    assert np.array_equal(p1(pts), np.sum(pts**2, axis=1) <= 1.0)
    ph = cross_section(halfspace(3, 2.0), 0.7)
    assert ph(np.random.default_rng(3).uniform(-100, 100, (100, 2))).all()
    with pytest.raises(ValueError):
        cross_section(S, -0.1)


def test_polynomial_cost():
    h = PolynomialCost([(2.0, (1, 0, 2)), (-1.0, (3, 1, 0)), (0.5, (0, 0, 0))])
    assert h.p == 3
    z = np.array([[1.5, -0.5, 2.0]])
    expect = 2 * 1.5 * 4 - 1.5**3 * -0.5 + 0.5
    assert h(z)[0] == pytest.approx(expect)
    assert PolynomialCost.one(3).is_constant
    with pytest.raises(ValueError):
        PolynomialCost([(1.0, (1, -1))])


def test_polynomial_set_matches_boundary():
    b = PolynomialBoundary([(1.0, (6, 0)), (1.0, (0, 8)), (1.0, (4, 2))])
    S = polynomial_set(1.0, b)
    z = np.random.default_rng(4).uniform(-1, 3, (3000, 3))
    assert np.array_equal(S.member(z), z[:, 0] - 1.0 >= b(z[:, 1:]))
    with pytest.raises(ValueError):
        PolynomialBoundary([(-1.0, (2,))])


def test_two_lobe_symmetry():
    S = two_lobe_set()
    z = np.random.default_rng(5).standard_normal((2000, 2)) * 2
    assert np.array_equal(S.member(z), S.member(z * [1, -1]))
    assert membership(S, [0.0, 1.0]) and membership(S, [0.0, -1.0])


def test_cto_feasibility_and_cost_examples():
    means = (12.0, 10.0, 9.0)
    assert cto_feasible([10.0, 20.0, 20.0], 1.0, means)
    assert not cto_feasible([30.0, 20.0, 20.0], 1.0, means)
    assert cto_cost([4.0, 20.0, 10.0], 15.0, 8.0) == pytest.approx(32.0)
    # all demand filled
    assert cto_cost([10.0, 5.0, 4.0], 15.0, 8.0) == 0.0


def test_cto_cost_nonnegative():
    X = np.random.default_rng(6).uniform(0, 30, (10000, 3))
    assert np.all(cto_cost(X, 15.0, 14.7) >= 0)


def test_cto_set_agrees_with_feasible():
    means = (12.0, 9.18, 9.0)
    S = cto_set(1.63, means)
    X = np.random.default_rng(7).uniform(0, 25, (10000, 3))
    assert np.array_equal(S.member(X), cto_feasible(X, 1.63, means))
    assert S.U2 == pytest.approx(1.63 * 9.18)
    with pytest.raises(ValueError):
        cto_set(0.0, means)
