import numpy as np
import pytest

from copulatail.constraints import ConstraintSet, cto_set
from copulatail.densities import Marginal
from copulatail.errors import DecompositionError, SaturationError
from copulatail.experiments import cto_start_point
from copulatail.norta import (CTO_MARGINALS, NortaModel, cto_corr, cto_model, pullback_cost,
                              pullback_set, tail_growth_probe)

MEANS = tuple(m.mean for m in CTO_MARGINALS)


def normal_model(d=3):
    return NortaModel([Marginal.normal(0.0, 1.0)] * d, np.eye(d))


def test_identity_model():
    z = np.random.default_rng(0).standard_normal((1000, 3)) * 3
    assert np.allclose(normal_model().forward(z), z, atol=1e-12)


def test_exponential_median():
    m = NortaModel([Marginal.exponential(1.0)] * 2, np.eye(2))
    assert np.allclose(m.forward(np.zeros(2)), np.log(2.0), rtol=1e-14)


@pytest.mark.parametrize("sign", ["negative", "positive"])
def test_roundtrip_in_ball(sign):
    model = cto_model(sign)
    rng = np.random.default_rng(1)
    u = rng.standard_normal((2000, 3))
    z = u / np.linalg.norm(u, axis=1, keepdims=True) * rng.uniform(0, 5, (2000, 1))
    assert np.max(np.abs(model.inverse(model.forward(z)) - z)) < 1e-8


def test_roundtrip_from_x():
    model = cto_model("negative")
    rng = np.random.default_rng(2)
    x = np.column_stack([rng.normal(12, 3, 1000), rng.uniform(2, 14, 1000), rng.uniform(3.5, 15.5, 1000)])
    back = model.forward(model.inverse(x))
    assert np.max(np.abs(back - x) / np.maximum(1, np.abs(x))) < 1e-8


def test_medians_map_to_origin():
    model = cto_model("positive")
    med = np.array([m.ppf(0.5) for m in CTO_MARGINALS])
    assert np.allclose(model.inverse(med), 0.0, atol=1e-12)


def test_support_boundary_raises():
    model = cto_model("negative")
    with pytest.raises(ValueError):
        model.inverse([12.0, 5.0, 3.0])
    with pytest.raises(ValueError):
        model.inverse([12.0, -1.0, 8.0])


def test_saturation_names_index():
    # log-space quantiles only give out once the normal tail itself underflows
    model = NortaModel([Marginal.triangular(0.0, 1.0, 2.0), Marginal.normal(0, 1)], np.eye(2))
    with pytest.raises(SaturationError) as ei:
        model.forward(np.array([[0.0, 1e200]]))
    assert ei.value.index == 1
    out = model.forward(np.array([[0.0, 1e200], [0.5, 0.5]]), strict=False)
    assert np.all(np.isnan(out[0])) and np.all(np.isfinite(out[1]))


def test_deep_tails_stay_finite():
    model = cto_model("negative")
    assert np.all(np.isfinite(model.forward(np.array([[7.5, -7.5, 7.5]]))))


def test_model_validation():
    with pytest.raises(ValueError):
        NortaModel([Marginal.normal(0, 1)] * 2, [[2.0, 0.0], [0.0, 1.0]])
    with pytest.raises(ValueError):
        NortaModel([Marginal.normal(0, 1)] * 2, np.eye(3))
    with pytest.raises(DecompositionError):
        NortaModel([Marginal.normal(0, 1)] * 2, [[1.0, 1.5], [1.5, 1.0]])
    with pytest.raises(ValueError):
        cto_corr("sideways")


def test_correlation_of_copula():
    model = cto_model("negative")
    z = np.random.default_rng(3).standard_normal((200000, 3))
    y = z @ model.A.T
    assert np.allclose(np.corrcoef(y.T), cto_corr(-1), atol=0.01)


def test_pullback_identity_membership():
    S_x = ConstraintSet([lambda x: x[:, 0] + x[:, 1] ** 2 - 1.0], 2)
    S_z = pullback_set(normal_model(2), S_x)
    pts = np.random.default_rng(4).standard_normal((10000, 2)) * 2
    assert np.array_equal(S_z.member(pts), S_x.member(pts))


def test_pullback_cost():
    model = NortaModel([Marginal.exponential(1.0)] * 2, np.eye(2))
    h = pullback_cost(model, lambda x: x.sum(axis=1))
    assert h(np.zeros((1, 2)))[0] == pytest.approx(2 * np.log(2))


def test_pullback_saturation_is_infeasible():
    model = normal_model(2)
    S_z = pullback_set(model, ConstraintSet([lambda x: x[:, 1]], 2))
    assert not S_z.member(np.array([[0.0, 1e200]]))[0]
    assert S_z.member(np.array([[0.0, 1e10]]))[0]


def test_cto_start_point_feasible():
    model = cto_model("negative")
    S_x = cto_set(1.63, MEANS)
    x, z = cto_start_point(S_x, model, np.random.default_rng(5))
    assert pullback_set(model, S_x).member(z[None, :])[0]
    assert np.allclose(model.forward(z), x, rtol=1e-8)


def test_boundary_preserved():
    model = cto_model("negative")
    S_x = cto_set(1.63, MEANS)
    x = np.array([10.0, S_x.U2, 15.5])
    assert abs(S_x.constraint_values(x[None, :])[0, 1]) <= 1e-9
    z = model.inverse(x)
    S_z = pullback_set(model, S_x)
    steps = np.vstack([np.eye(3), -np.eye(3)]) * 1e-4
    inside = S_z.member(z + steps)
    assert inside.any() and not inside.all()


def test_tail_probe_classes():
    exp_model = NortaModel([Marginal.exponential(1.0)] * 2, np.eye(2))
    assert tail_growth_probe(exp_model)["classification"] == "regularly-varying-compatible"
    assert tail_growth_probe(normal_model(2))["classification"] == "regularly-varying-compatible"
    par = NortaModel([Marginal.pareto(3.0, 1.0)] * 2, np.eye(2))
    with pytest.warns(RuntimeWarning):
        out = tail_growth_probe(par)
    assert out["classification"] == "super-exponential"
