"""Experiment configuration: TOML parsing, validation, defaults and hashing.

Schema (all keys optional unless noted)::

    experiment = "gaussian_quadratic"   # required: gaussian_quadratic | cto | custom
    seed = 0
    n = 1000000                         # draws per (cell, estimator)
    batches = 32
    estimators = ["O", "E", "N", "AR"]
    output = "results/run"              # writes <output>.csv, <output>.json, <output>_plot.csv
    max_total_draws = 1e10              # budget guard

    [gaussian]                          # experiment = gaussian_quadratic
    d = 3
    z1star = [2, 3, 4, 5, 6]
    theta = 0.5                         # optional override
    lambda = 1.5                        # optional override of the O rate
    theta_rule = "optimal"              # optimal: 1/(1+s); half_dim: lambda = 2 z1*/(d-1)

    [cto]                               # experiment = cto
    correlation = ["negative"]          # negative | positive
    gamma = [1.63]
    n_ar = 1000000                      # optional, AR draws (defaults to n)

    [custom]                            # experiment = custom
    set = "quadratic"                   # halfspace | quadratic | two_lobe | ball | polynomial
    d = 2
    z1star = [3.0]
    boundary = [[1.0, [2]]]             # polynomial: (a, nu) terms
    cost = [[1.0, [0, 0]]]              # optional monomial cost terms (g, exponents)
    center = [0.0, 4.0]                 # ball
    radius = 1.0                        # ball

    [econorta]
    Delta = 50
    C = 10
    delta = 0.25
    m_k = 100
    max_outer = 50
    stall_tol = 1e-3
    patience = 10
    max_widen = 5
"""

import copy
import hashlib
import json

import tomli

from .dominating import EcoNortaParams
from .errors import ConfigError
from .estimators import KINDS

EXPERIMENTS = ("gaussian_quadratic", "cto", "custom")
CUSTOM_SETS = ("halfspace", "quadratic", "two_lobe", "ball", "polynomial")

DEFAULTS = {
    "seed": 0,
    "n": 10**6,
    "batches": 32,
    "output": "results/run",
    "max_total_draws": 1e10,
}
DEFAULT_ESTIMATORS = {
    "gaussian_quadratic": ["O", "E", "N", "AR"],
    "cto": ["AR", "eN"],
    "custom": ["AR", "N", "E", "L", "eN"],
}
SECTION_DEFAULTS = {
    "gaussian": {"d": 3, "z1star": [2.0, 3.0, 4.0, 5.0, 6.0], "theta_rule": "optimal"},
    "cto": {"correlation": ["negative"], "gamma": [1.63]},
    "custom": {"d": 2, "z1star": [3.0]},
    "econorta": {},
}
TOP_KEYS = set(DEFAULTS) | {"experiment", "estimators"} | set(SECTION_DEFAULTS)


def _err(field, msg):
    return ConfigError(f"field '{field}': {msg}")


def loads(text):
    """Parse TOML text; syntax errors are reported with line and column."""
    try:
        return tomli.loads(text)
    except tomli.TOMLDecodeError as e:
        raise ConfigError(f"config syntax error: {e}") from None


def load(path):
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    return loads(raw.decode("utf-8"))


def config_hash(raw):
    """sha256 over the canonical (sorted-key, compact) JSON of the parsed config."""
    text = json.dumps(raw, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _int(cfg, key, field, lo=1):
    v = cfg[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or int(v) != v or v < lo:
        raise _err(field, f"expected an integer >= {lo}, got {v!r}")
    cfg[key] = int(v)


def _number_list(cfg, key, field, positive=True):
    v = cfg[key]
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        v = [v]
    if not isinstance(v, list) or not v:
        raise _err(field, "expected a non-empty list of numbers")
    for x in v:
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            raise _err(field, f"expected numbers, got {x!r}")
        if positive and not x > 0:
            raise _err(field, f"values must be positive, got {x!r}")
    cfg[key] = [float(x) for x in v]


def validate(raw):
    """Return a normalised copy of ``raw`` with defaults filled in.

    Raises ConfigError naming the offending field.
    """
    if not isinstance(raw, dict):
        raise ConfigError("config must be a table")
    unknown = set(raw) - TOP_KEYS
    if unknown:
        raise _err(sorted(unknown)[0], "unknown key")
    cfg = copy.deepcopy(DEFAULTS)
    cfg.update(copy.deepcopy(raw))
    exp = cfg.get("experiment")
    if exp not in EXPERIMENTS:
        raise _err("experiment", f"expected one of {EXPERIMENTS}, got {exp!r}")
    _int(cfg, "seed", "seed", lo=0)
    _int(cfg, "n", "n")
    _int(cfg, "batches", "batches")
    if not isinstance(cfg["output"], str) or not cfg["output"]:
        raise _err("output", "expected a non-empty path string")
    if not (isinstance(cfg["max_total_draws"], (int, float)) and cfg["max_total_draws"] > 0):
        raise _err("max_total_draws", "expected a positive number")

    ests = cfg.get("estimators", DEFAULT_ESTIMATORS[exp])
    if not isinstance(ests, list) or not ests:
        raise _err("estimators", "estimator list is empty")
    for k in ests:
        if k not in KINDS:
            raise _err("estimators", f"unknown estimator {k!r}; expected one of {KINDS}")
    if len(set(ests)) != len(ests):
        raise _err("estimators", "duplicate estimator")
    cfg["estimators"] = list(ests)

    for sec, dflt in SECTION_DEFAULTS.items():
        val = cfg.get(sec, {})
        if not isinstance(val, dict):
            raise _err(sec, "expected a table")
        merged = copy.deepcopy(dflt)
        merged.update(val)
        cfg[sec] = merged

    try:
        EcoNortaParams(**cfg["econorta"])
    except TypeError as e:
        raise _err("econorta", str(e)) from None
    except ValueError as e:
        raise _err("econorta", str(e)) from None

    if exp == "gaussian_quadratic":
        cells = _validate_gaussian(cfg)
    elif exp == "cto":
        cells = _validate_cto(cfg)
    else:
        cells = _validate_custom(cfg)

    total = cfg["n"] * cells * len(cfg["estimators"])
    if exp == "cto" and "n_ar" in cfg["cto"]:
        total += (cfg["cto"]["n_ar"] - cfg["n"]) * cells * ("AR" in cfg["estimators"])
    if total > cfg["max_total_draws"]:
        raise _err("n", f"total draws {total:.3g} exceed max_total_draws "
                        f"{cfg['max_total_draws']:.3g}")
    return cfg


def _validate_gaussian(cfg):
    g = cfg["gaussian"]
    allowed = {"d", "z1star", "theta", "lambda", "theta_rule"}
    bad = set(g) - allowed
    if bad:
        raise _err(f"gaussian.{sorted(bad)[0]}", "unknown key")
    _int(g, "d", "gaussian.d", lo=2)
    _number_list(g, "z1star", "gaussian.z1star")
    if g["theta_rule"] not in ("optimal", "half_dim"):
        raise _err("gaussian.theta_rule", "expected 'optimal' or 'half_dim'")
    for key in ("theta", "lambda"):
        if key in g and (isinstance(g[key], bool) or not isinstance(g[key], (int, float))):
            raise _err(f"gaussian.{key}", f"expected a number, got {g[key]!r}")
    if "theta" in g and not 0 < g["theta"] < 2:
        raise _err("gaussian.theta", f"theta must lie in (0, 2), got {g['theta']!r}")
    if "lambda" in g and not g["lambda"] > 0:
        raise _err("gaussian.lambda", "rate must be positive")
    if g["theta_rule"] == "half_dim" and g["d"] < 3 and "theta" not in g and "lambda" not in g:
        raise _err("gaussian.theta_rule", "half_dim gives theta = 2/(d-1), outside (0, 2) for d = 2")
    return len(g["z1star"])


def _validate_cto(cfg):
    c = cfg["cto"]
    bad = set(c) - {"correlation", "gamma", "n_ar"}
    if bad:
        raise _err(f"cto.{sorted(bad)[0]}", "unknown key")
    corr = c["correlation"]
    corr = [corr] if isinstance(corr, str) else corr
    if not isinstance(corr, list) or not corr or any(x not in ("negative", "positive") for x in corr):
        raise _err("cto.correlation", "expected 'negative' and/or 'positive'")
    c["correlation"] = list(corr)
    _number_list(c, "gamma", "cto.gamma")
    if "n_ar" in c:
        _int(c, "n_ar", "cto.n_ar")
    for k in cfg["estimators"]:
        if k not in ("AR", "eN"):
            raise _err("estimators", f"the cto experiment supports AR and eN, not {k!r}")
    return len(c["correlation"]) * len(c["gamma"])


def _validate_custom(cfg):
    c = cfg["custom"]
    kind = c.get("set")
    if kind not in CUSTOM_SETS:
        raise _err("custom.set", f"expected one of {CUSTOM_SETS}, got {kind!r}")
    _int(c, "d", "custom.d", lo=1)
    if kind in ("halfspace", "quadratic", "polynomial"):
        _number_list(c, "z1star", "custom.z1star")
    if kind == "two_lobe" and c["d"] != 2:
        raise _err("custom.d", "the two-lobe set is two-dimensional")
    if kind == "polynomial":
        terms = c.get("boundary")
        if not isinstance(terms, list) or not terms:
            raise _err("custom.boundary", "polynomial set needs (a, nu) terms")
        for t in terms:
            if not (isinstance(t, list) and len(t) == 2 and isinstance(t[1], list)
                    and len(t[1]) == c["d"] - 1):
                raise _err("custom.boundary", f"term {t!r} is not [a, [nu_2..nu_d]]")
    if kind == "ball":
        ctr = c.get("center")
        if not isinstance(ctr, list) or len(ctr) != c["d"]:
            raise _err("custom.center", f"expected {c['d']} coordinates")
        if not c.get("radius", 0) > 0:
            raise _err("custom.radius", "expected a positive radius")
    if "cost" in c:
        for t in c["cost"]:
            if not (isinstance(t, list) and len(t) == 2 and isinstance(t[1], list)
                    and len(t[1]) == c["d"]):
                raise _err("custom.cost", f"term {t!r} is not [g, [e_1..e_d]]")
    if "O" in cfg["estimators"] and kind not in ("quadratic", "polynomial", "halfspace"):
        raise _err("estimators", f"O needs structural constants, unavailable for {kind!r}")
    return len(c["z1star"]) if kind in ("halfspace", "quadratic", "polynomial") else 1
