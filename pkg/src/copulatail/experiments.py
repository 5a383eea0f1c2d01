"""Experiment drivers behind the CLI and their CSV/JSON emitter."""

import csv
import json
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import config as cfgmod
from .constraints import (ConstraintSet, PolynomialBoundary, PolynomialCost, ball_set, cto_set, halfspace,
                          polynomial_set, quadratic_set, two_lobe_set)
from .densities import RngStream
from .dominating import (DominatingSet, EcoNortaParams, _feasible_seeds, _local_min,
                         econorta_discover, nearest_point)
from .errors import ConfigError, NumericalError
from .estimators import EstimatorConfig, optimal_theta, run_estimator
from .norta import cto_model, pullback_set
from .oracles import alpha_recursion, ball_volume, quadrature_alpha, theoretical_rates
from .structural import StructuralConstants, structural_constants

log = logging.getLogger("copulatail")

GAUSSIAN_COLUMNS = ["d", "z1star", "estimator", "theta", "n", "mean", "se", "ci_lo", "ci_hi",
                    "re", "alpha", "rel_bias", "second_moment_ratio", "rel_mse", "rate_exponent",
                    "rate_constant", "rate_prediction"]
CTO_COLUMNS = ["correlation", "gamma", "estimator", "n", "p", "p_se", "p_ci_lo", "p_ci_hi",
               "p_re", "p_second_moment_ratio", "alpha", "alpha_se", "alpha_ci_lo", "alpha_ci_hi",
               "alpha_re", "alpha_second_moment_ratio", "n_dominating", "discovery_ok"]
CUSTOM_COLUMNS = ["set", "d", "z1star", "estimator", "n", "mean", "se", "ci_lo", "ci_hi", "re",
                  "truth", "z_score", "second_moment_ratio"]
PLOT_COLUMNS = ["estimator", "d", "log_z1star", "log_second_moment_ratio"]


@dataclass
class Results:
    experiment: str
    columns: list
    rows: list
    seed: int
    config_hash: str
    config: dict
    extra: dict = field(default_factory=dict)
    plot: list = field(default_factory=list)

    def to_dict(self):
        return {"experiment": self.experiment, "seed": self.seed, "config_hash": self.config_hash,
                "config": self.config, "columns": self.columns, "rows": self.rows,
                "extra": self.extra, "plot": self.plot}


def cell_seed(seed, *keys):
    """Independent integer seed for one (cell, estimator) combination."""
    return int(np.random.SeedSequence([int(seed), *map(int, keys)]).generate_state(1, np.uint64)[0])


def _cell_key(z):
    return "fixed" if z is None else f"{z:g}"


def _f(x):
    return float(x) if x is not None else float("nan")


# ---------------------------------------------------------------------------
# gaussian quadratic set


def gaussian_cell(d, z):
    """Quadratic set, exact alpha, constants and the aligned dominating point."""
    S = quadratic_set(d, z)
    constants = StructuralConstants(s=(d - 1) / 2.0, eta=float(ball_volume(d - 1)),
                                    c=(0,) * d, x_star=(0.5,) * (d - 1))
    return S, alpha_recursion(d, z), constants, DominatingSet.aligned(z, d)


def _gaussian_theta(g, s, d):
    if "theta" in g:
        return g["theta"]
    if g["theta_rule"] == "half_dim":
        return 2.0 / (d - 1)
    return optimal_theta(s)


def gaussian_rate(kind, constants, d, theta):
    if kind == "AR":
        return None
    if kind == "eN":
        kind = "L"
    return theoretical_rates(kind, constants, d, theta=theta if kind == "O" else None)


def run_gaussian_experiment(cfg, chash=None):
    g = cfg["gaussian"]
    d = g["d"]
    rows, plot = [], []
    for ci, z in enumerate(g["z1star"]):
        S, alpha, constants, dom = gaussian_cell(d, z)
        theta = _gaussian_theta(g, constants.s, d)
        lam = g.get("lambda")
        for ei, kind in enumerate(cfg["estimators"]):
            ec = EstimatorConfig(kind, theta=theta, lam=lam, dominating=dom, constants=constants,
                                 hyperplane=True)
            res = run_estimator(ec.sampler(S), cfg["n"], cfg["batches"],
                                seed=cell_seed(cfg["seed"], ci, ei), alpha=alpha)
            log.info("d=%d z1*=%g %s: %.4g s", d, z, kind, res.wall_time)
            rate = gaussian_rate(kind, constants, d, theta)
            if kind == "O" and lam is not None:
                rate = None
            row = {"d": d, "z1star": z, "estimator": kind,
                   "theta": theta if kind == "O" and lam is None else float("nan"),
                   "n": res.n, "mean": res.mean, "se": res.se, "ci_lo": res.ci_lo,
                   "ci_hi": res.ci_hi, "re": res.re, "alpha": alpha,
                   "rel_bias": res.mean / alpha - 1.0,
                   "second_moment_ratio": res.second_moment_ratio,
                   "rel_mse": res.second_moment_ratio - 1.0 - 2.0 * (res.mean / alpha - 1.0),
                   "rate_exponent": rate.exponent if rate else float("nan"),
                   "rate_constant": rate.constant if rate else float("nan"),
                   "rate_prediction": float(rate.predicted_ratio(z)) if rate else float("nan")}
            rows.append(row)
            if res.second_moment_ratio > 0:
                plot.append({"estimator": kind, "d": d, "log_z1star": math.log(z),
                             "log_second_moment_ratio": math.log(res.second_moment_ratio)})
    return Results("gaussian_quadratic", GAUSSIAN_COLUMNS, rows, cfg["seed"], chash, cfg,
                   plot=plot)


# ---------------------------------------------------------------------------
# capacitated two-period order scenario


def cto_start_point(S_x, model, rng):
    """Feasible z near the nearest x-space point, measured in marginal-standardised units.

    The x-space minimiser sits on the boundary, so it is pulled a little
    toward a feasible interior point until its NORTA preimage is feasible.
    """
    mu = np.array([m.mean for m in model.marginals])
    sd = np.array([m.std for m in model.marginals])

    def to_x(u):
        return mu + sd * np.asarray(u, dtype=float)

    cons = [lambda u, i=i: S_x.constraint_values(to_x(u))[..., i] for i in range(len(S_x.constraints))]
    S_u = ConstraintSet(cons, S_x.dim, "fixed", name="cto_standardized")
    u_star = nearest_point(S_u, rng=rng)
    inner = _feasible_seeds(S_u, 1, rng)[0]
    S_z = pullback_set(model, S_x)
    for eps in 10.0 ** np.arange(-6, 0.5, 0.5):
        x = to_x(u_star + eps * (inner - u_star))
        try:
            z = model.inverse(x)
        except ValueError:
            continue
        if S_z.member(z):
            return x, z
    raise NumericalError("could not map the x-space nearest point to a feasible z")


def _cto_sampler(kind, S_z, dom):
    def h2(Z):
        return np.column_stack([np.ones(Z.shape[0]), S_z.cost(Z)])

    ec = EstimatorConfig(kind, dominating=dom, cost=h2)
    return ec.sampler(S_z)


def run_cto_experiment(cfg, chash=None):
    c = cfg["cto"]
    params = EcoNortaParams(**cfg["econorta"])
    rows, extra = [], {"dominating": {}}
    cell = 0
    for sign in c["correlation"]:
        model = cto_model(sign)
        means = [m.mean for m in model.marginals]
        for gamma in c["gamma"]:
            S_x = cto_set(gamma, means)
            S_z = pullback_set(model, S_x)
            dom, ok, info = None, False, {}
            if "eN" in cfg["estimators"]:
                rng = RngStream(cfg["seed"], 1_000_000 + cell).generator()
                try:
                    x0, z0 = cto_start_point(S_x, model, rng)
                    res = econorta_discover(S_z, params, z0=z0, rng=rng, return_result=True)
                    dom, ok = res.dominating, True
                    info = {"x_start": x0.tolist(), "z_start": z0.tolist(),
                            "iterations": res.iterations, "converged": res.converged,
                            **dom.to_dict()}
                except (NumericalError, ValueError) as e:
                    info = {"error": str(e)}
                    log.warning("discovery failed for %s gamma=%g: %s", sign, gamma, e)
                extra["dominating"][f"{sign}:{gamma:g}"] = info
            for ei, kind in enumerate(cfg["estimators"]):
                n = c.get("n_ar", cfg["n"]) if kind == "AR" else cfg["n"]
                row = {"correlation": sign, "gamma": gamma, "estimator": kind, "n": n,
                       "n_dominating": len(dom) if dom is not None else 0,
                       "discovery_ok": ok if kind == "eN" else True}
                if kind == "eN" and not ok:
                    for col in CTO_COLUMNS[4:16]:
                        row[col] = float("nan")
                    rows.append(row)
                    continue
                p_res, a_res = run_estimator(_cto_sampler(kind, S_z, dom), n, cfg["batches"],
                                             seed=cell_seed(cfg["seed"], cell, ei))
                log.info("%s gamma=%g %s: %.4g s", sign, gamma, kind, p_res.wall_time)
                for pre, r in (("p", p_res), ("alpha", a_res)):
                    row[pre] = r.mean
                    row[f"{pre}_se"] = r.se
                    row[f"{pre}_ci_lo"] = r.ci_lo
                    row[f"{pre}_ci_hi"] = r.ci_hi
                    row[f"{pre}_re"] = r.re
                    row[f"{pre}_second_moment_ratio"] = r.second_moment_ratio
                rows.append(row)
            cell += 1
    return Results("cto", CTO_COLUMNS, rows, cfg["seed"], chash, cfg, extra=extra)


# ---------------------------------------------------------------------------
# custom sets


def custom_set(c, z=None):
    kind, d = c["set"], c["d"]
    if kind == "halfspace":
        S = halfspace(d, z)
    elif kind == "quadratic":
        S = quadratic_set(d, z)
    elif kind == "polynomial":
        S = polynomial_set(z, PolynomialBoundary(c["boundary"]))
    elif kind == "ball":
        S = ball_set(c["center"], c["radius"])
    else:
        S = two_lobe_set()
    if "cost" in c:
        S.cost = PolynomialCost(c["cost"])
    return S


def _custom_dominating(S, z, params, rng):
    """Aligned point for translated sets; ecoNORTA followed by a local polish otherwise."""
    if S.regime == "translation":
        return DominatingSet.aligned(z, S.dim)
    found = econorta_discover(S, params, z0=nearest_point(S, rng=rng), rng=rng)
    pts = []
    for p in found.points:
        q = _local_min(S, p)
        pts.append(q if S.member(q) and q @ q <= p @ p else p)
    return DominatingSet(pts)


def union_hyperplane_holds(S, dom, n=20000, rng=None):
    """Feasible points near every dominating point lie in some supporting halfspace."""
    rng = np.random.default_rng(rng)
    U = dom.directions()
    for p in dom.points:
        pts = p + rng.choice([0.05, 0.5, 2.0], size=(n, 1)) * rng.standard_normal((n, S.dim))
        pts = pts[S.member(pts)]
        if pts.size and np.any(np.max(pts @ U.T - dom.norms, axis=1) < -1e-12):
            return False
    return True


def run_custom_experiment(cfg, chash=None):
    c = cfg["custom"]
    params = EcoNortaParams(**cfg["econorta"])
    zs = c["z1star"] if c["set"] in ("halfspace", "quadratic", "polynomial") else [None]
    rows, extra = [], {"dominating": {}}
    for ci, z in enumerate(zs):
        S = custom_set(c, z)
        rng = RngStream(cfg["seed"], 1_000_000 + ci).generator()
        dom = _custom_dominating(S, z, params, rng)
        extra["dominating"][_cell_key(z)] = dom.to_dict()
        truth = quadrature_alpha(S, S.cost) if S.dim <= 3 else float("nan")
        constants = None
        if "O" in cfg["estimators"]:
            cexp = S.cost.leading_exponents if S.cost is not None else (0,) * S.dim
            if c["set"] == "quadratic" and not any(cexp):
                constants = gaussian_cell(S.dim, z)[2]
            else:
                constants = structural_constants(S.boundary, cexp, rng=rng)
        hyper = union_hyperplane_holds(S, dom, rng=rng)
        for ei, kind in enumerate(cfg["estimators"]):
            ec = EstimatorConfig(kind, dominating=dom, constants=constants, cost=S.cost,
                                 hyperplane=hyper)
            res = run_estimator(ec.sampler(S), cfg["n"], cfg["batches"],
                                seed=cell_seed(cfg["seed"], ci, ei), alpha=truth)
            rows.append({"set": c["set"], "d": S.dim, "z1star": _f(z), "estimator": kind,
                         "n": res.n, "mean": res.mean, "se": res.se, "ci_lo": res.ci_lo,
                         "ci_hi": res.ci_hi, "re": res.re, "truth": truth,
                         "z_score": (res.mean - truth) / res.se if res.se > 0 else float("nan"),
                         "second_moment_ratio": res.second_moment_ratio})
    return Results("custom", CUSTOM_COLUMNS, rows, cfg["seed"], chash, cfg, extra=extra)


# ---------------------------------------------------------------------------
# entry points


def prepare(raw):
    """Validated config plus the hash of the raw (pre-default) config."""
    return cfgmod.validate(raw), cfgmod.config_hash(raw)


def run_experiment(raw):
    cfg, chash = prepare(raw)
    runner = {"gaussian_quadratic": run_gaussian_experiment, "cto": run_cto_experiment,
              "custom": run_custom_experiment}[cfg["experiment"]]
    return runner(cfg, chash)


def rates_table(raw):
    """Theoretical-only rows for the configured cells."""
    cfg, chash = prepare(raw)
    if cfg["experiment"] != "gaussian_quadratic":
        raise ConfigError("theoretical rates are tabulated for the gaussian_quadratic experiment")
    g, rows = cfg["gaussian"], []
    d = g["d"]
    for z in g["z1star"]:
        _, alpha, constants, _ = gaussian_cell(d, z)
        theta = _gaussian_theta(g, constants.s, d)
        for kind in cfg["estimators"]:
            rate = gaussian_rate(kind, constants, d, theta)
            rows.append({"d": d, "z1star": z, "estimator": kind, "alpha": alpha,
                         "rate_exponent": rate.exponent if rate else float("nan"),
                         "rate_constant": rate.constant if rate else float("nan"),
                         "rate_prediction": float(rate.predicted_ratio(z)) if rate else 1.0 / alpha})
    cols = ["d", "z1star", "estimator", "alpha", "rate_exponent", "rate_constant",
            "rate_prediction"]
    return Results("rates", cols, rows, cfg["seed"], chash, cfg)


def discover(raw):
    """Dominating sets only (cto and fixed custom sets)."""
    cfg, chash = prepare(raw)
    params = EcoNortaParams(**cfg["econorta"])
    out = {}
    if cfg["experiment"] == "cto":
        cell = 0
        for sign in cfg["cto"]["correlation"]:
            model = cto_model(sign)
            means = [m.mean for m in model.marginals]
            for gamma in cfg["cto"]["gamma"]:
                rng = RngStream(cfg["seed"], 1_000_000 + cell).generator()
                S_x = cto_set(gamma, means)
                _, z0 = cto_start_point(S_x, model, rng)
                res = econorta_discover(pullback_set(model, S_x), params, z0=z0, rng=rng,
                                        return_result=True)
                out[f"{sign}:{gamma:g}"] = {**res.dominating.to_dict(),
                                            "iterations": res.iterations,
                                            "converged": res.converged}
                cell += 1
    elif cfg["experiment"] == "custom":
        c = cfg["custom"]
        zs = c["z1star"] if c["set"] in ("halfspace", "quadratic", "polynomial") else [None]
        for ci, z in enumerate(zs):
            rng = RngStream(cfg["seed"], 1_000_000 + ci).generator()
            S = custom_set(c, z)
            out[_cell_key(z)] = _custom_dominating(S, z, params, rng).to_dict()
    else:
        for z in cfg["gaussian"]["z1star"]:
            out[_cell_key(z)] = DominatingSet.aligned(z, cfg["gaussian"]["d"]).to_dict()
    return {"experiment": cfg["experiment"], "seed": cfg["seed"], "config_hash": chash,
            "dominating": out}


# ---------------------------------------------------------------------------
# output


def _json_clean(x):
    if isinstance(x, dict):
        return {k: _json_clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_clean(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return float(x) if math.isfinite(x) else None
    return x


def to_json(obj):
    return json.dumps(_json_clean(obj), indent=2, sort_keys=False, allow_nan=False) + "\n"


def _csv_cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return "nan" if math.isnan(v) else f"{v:.6g}"
    return str(v)


def _write_csv(path, columns, rows, header=None):
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(header + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_csv_cell(r.get(c, "")) for c in columns])


def emit(results, prefix, formats=("csv", "json")):
    """Write ``<prefix>.csv``/``<prefix>.json`` (plus ``<prefix>_plot.csv``); return the paths."""
    if not results.rows:
        raise ValueError("no result rows to emit")
    d = os.path.dirname(prefix)
    if d:
        os.makedirs(d, exist_ok=True)
    paths = []
    if "csv" in formats:
        header = f"# seed={results.seed} config_hash={results.config_hash}"
        _write_csv(prefix + ".csv", results.columns, results.rows, header)
        paths.append(prefix + ".csv")
        if results.plot:
            _write_csv(prefix + "_plot.csv", PLOT_COLUMNS, results.plot, header)
            paths.append(prefix + "_plot.csv")
    if "json" in formats:
        path = prefix + ".json"
        with open(path, "w") as fh:
            fh.write(to_json(results.to_dict()))
        paths.append(path)
    return paths


def read_json(path):
    with open(path) as fh:
        return json.load(fh)
