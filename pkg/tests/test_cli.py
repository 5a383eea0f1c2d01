import json

import pytest

from copulatail import cli, experiments
from copulatail.config import config_hash
from copulatail.errors import NumericalError


def write(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


GAUSS = """
experiment = "gaussian_quadratic"
seed = 5
n = 20000
batches = 8
estimators = ["O", "E", "N", "AR"]

[gaussian]
d = 3
z1star = [2, 3]
"""

CUSTOM = """
experiment = "custom"
seed = 1
n = 20000
batches = 8
estimators = ["AR", "L", "eN"]

[custom]
set = "two_lobe"
d = 2
"""


def test_run_writes_files(tmp_path, capsys):
    cfg = write(tmp_path, GAUSS)
    prefix = str(tmp_path / "out" / "g")
    assert cli.main(["run", cfg, "-o", prefix]) == 0
    printed = capsys.readouterr().out.split()
    assert printed == [prefix + ".csv", prefix + "_plot.csv", prefix + ".json"]
    lines = open(prefix + ".csv").read().splitlines()
    assert lines[0].startswith("# seed=5 config_hash=")
    assert lines[1] == ",".join(experiments.GAUSSIAN_COLUMNS)
    assert len(lines) == 2 + 8


def test_run_is_byte_identical(tmp_path):
    cfg = write(tmp_path, CUSTOM)
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    assert cli.main(["run", cfg, "-o", a]) == 0
    assert cli.main(["run", cfg, "-o", b]) == 0
    for ext in (".csv", ".json"):
        assert open(a + ext, "rb").read() == open(b + ext, "rb").read()


def test_json_roundtrip(tmp_path):
    cfg = write(tmp_path, GAUSS)
    from copulatail.config import load
    res = experiments.run_experiment(load(cfg))
    paths = experiments.emit(res, str(tmp_path / "r"), ("json",))
    assert experiments.read_json(paths[0]) == json.loads(experiments.to_json(res.to_dict()))
    back = experiments.read_json(paths[0])
    assert back["rows"][0]["mean"] == res.rows[0]["mean"]
    assert back["config_hash"] == config_hash(load(cfg))


def test_format_option(tmp_path):
    cfg = write(tmp_path, CUSTOM)
    prefix = str(tmp_path / "only")
    assert cli.main(["run", cfg, "-o", prefix, "--format", "json"]) == 0
    assert (tmp_path / "only.json").exists() and not (tmp_path / "only.csv").exists()


def test_gaussian_rows_order_and_ranking(tmp_path):
    from copulatail.config import loads
    raw = loads(GAUSS.replace("n = 20000", "n = 200000").replace("[2, 3]", "[3]"))
    res = experiments.run_experiment(raw)
    ratio = {r["estimator"]: r["second_moment_ratio"] for r in res.rows}
    assert [r["estimator"] for r in res.rows] == ["O", "E", "N", "AR"]
    assert min(ratio, key=ratio.get) == "O"


def test_validate_verb(tmp_path, capsys):
    assert cli.main(["validate", write(tmp_path, GAUSS)]) == 0
    assert capsys.readouterr().out.startswith("ok: gaussian_quadratic")


def test_rates_verb(tmp_path, capsys):
    assert cli.main(["rates", write(tmp_path, GAUSS)]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("d,z1star,estimator")
    assert len(out) == 1 + 8
    assert cli.main(["rates", write(tmp_path, CUSTOM)]) == 2


def test_discover_verb(tmp_path, capsys):
    out = tmp_path / "dom.json"
    assert cli.main(["discover", write(tmp_path, CUSTOM), "-o", str(out)]) == 0
    data = json.loads(out.read_text())
    assert len(data["dominating"]["fixed"]["points"]) == 2


def test_config_error_exit_code(tmp_path, capsys):
    bad = write(tmp_path, GAUSS.replace('["O", "E", "N", "AR"]', "[]"))
    assert cli.main(["run", bad]) == 2
    assert "field 'estimators'" in capsys.readouterr().err
    assert cli.main(["validate", write(tmp_path, "experiment = ", "broken.toml")]) == 2
    assert cli.main(["validate", str(tmp_path / "missing.toml")]) == 2


def test_numerical_error_exit_code(tmp_path, monkeypatch, capsys):
    def boom(raw):
        raise NumericalError("weights overflowed")
    monkeypatch.setattr(experiments, "run_experiment", boom)
    assert cli.main(["run", write(tmp_path, GAUSS)]) == 3
    assert "numerical failure" in capsys.readouterr().err


def test_emit_empty_rows(tmp_path):
    res = experiments.Results("x", ["a"], [], 0, "h", {})
    with pytest.raises(ValueError):
        experiments.emit(res, str(tmp_path / "e"))


def test_budget_guard_blocks_run(tmp_path, capsys):
    cfg = write(tmp_path, GAUSS.replace("batches = 8", "batches = 8\nmax_total_draws = 1000"))
    assert cli.main(["run", cfg]) == 2
    assert "max_total_draws" in capsys.readouterr().err


def test_cto_small_run(tmp_path):
    from copulatail.config import loads
    raw = loads('experiment = "cto"\nseed = 2\nn = 20000\nbatches = 8\n'
                '[cto]\ncorrelation = ["negative"]\ngamma = [1.63]\n')
    res = experiments.run_experiment(raw)
    assert [r["estimator"] for r in res.rows] == ["AR", "eN"]
    eN = res.rows[1]
    assert eN["discovery_ok"] and eN["n_dominating"] >= 1
    assert 0 < eN["p"] < 0.01
    assert "negative:1.63" in res.extra["dominating"]
