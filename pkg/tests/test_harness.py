import csv
import io
import json

import numpy as np
import pytest

from oracles import h2, wootters_eof
from qadditivity import channels as C
from qadditivity import harness as H
from qadditivity import quantities as Q
from qadditivity.errors import ConfigError, DimensionError

SMALL = {"restarts": 4, "max_iters": 600}


def _cfg(**kw):
    kw.setdefault("options", SMALL)
    return H.ExperimentConfig.from_dict(kw)


def test_minent_additivity_identity():
    rep = H.run_experiment(_cfg(kind="minent-additivity", channels=["identity:d=2", "identity:d=2"]))
    res = rep.results[0]
    assert abs(res["gap"]["value"]) <= 1e-9
    assert "upper bounds" in res["gap"]["bound_direction"]
    assert res["gap"]["candidate_violation"] is False


def test_chi_additivity_depolarizing_pair():
    rep = H.run_experiment(_cfg(kind="chi-additivity", channels=["depolarizing:p=0.5", "depolarizing:p=0.3"]))
    res = rep.results[0]
    want = (1 - h2(0.25)) + (1 - h2(0.15))
    assert abs(res["sum"] - want) <= 1e-6
    assert abs(res["tensor"]["value"] - want) <= 1e-3
    assert abs(res["gap"]["value"]) <= 1e-3
    assert "lower bounds" in res["gap"]["bound_direction"]


def test_eof_additivity_and_strong_superadditivity_run():
    rep = H.run_batch([
        _cfg(kind="eof-additivity", states=["werner:p=0.8", "epr"]),
        _cfg(kind="strong-superadd", states=["random:dim=16,rank=1,seed=3,dims=2x2x2x2"]),
    ])
    eof_res, strong = rep.results
    assert abs(eof_res["first"]["value"] - wootters_eof(H.load_state("werner:p=0.8").matrix)) <= 1e-6
    assert eof_res["gap"]["value"] <= 1e-6
    assert "escalations" in strong["gap"]


def test_msw_check_on_werner_state():
    rep = H.run_experiment(_cfg(kind="msw-check", states=["werner:p=0.8"], options={}))
    res = rep.results[0]
    assert res["input_dim"] == 4
    assert res["residual"] <= 1e-3
    assert res["passed"] is True


def test_dual_certificate_and_gadget_reports():
    rep = H.run_batch([
        _cfg(kind="dual-certificate", channels=["depolarizing:p=0.4"], states=["diag:0.7,0.3"],
             params={"samples": 2000}),
        _cfg(kind="gadget-verify", channels=["random:d_in=2,d_out=2,d_env=2,seed=1"], states=["maxmixed:d=2"],
             params={"q": 0.5}),
    ])
    dual, gadget = rep.results
    assert dual["passed"] and dual["weak_duality_gap"]["value"] >= -1e-7
    assert dual["feasibility"]["violations"] == 0
    assert gadget["passed"], gadget["checks"]
    assert rep.passed


def test_candidate_violation_triggers_escalation():
    # a gap that never clears exhausts the escalation budget
    calls = []

    def evaluate(opts):
        calls.append(opts.restarts)
        return -1.0

    result, n = H._escalating(evaluate, Q.OptimizerOptions(restarts=2), lambda r: r < 0)
    assert n == H.MAX_ESCALATIONS
    assert calls == [2, 4, 8, 16]


def test_report_payload_is_byte_identical():
    cfg = _cfg(kind="chi-additivity", channels=["random:d_in=2,d_out=2,d_env=2,seed=5"], seed=7)
    a, b = H.run_experiment(cfg), H.run_experiment(cfg)
    assert a.payload_bytes() == b.payload_bytes()
    data = json.loads(a.to_json())
    assert {"config", "results", "version", "seed", "timings"} <= set(data)
    assert data["seed"] == 7
    assert "timings" not in json.loads(a.payload_bytes())


def test_doubling_restarts_does_not_worsen_bounds():
    base = {"restarts": 2, "max_iters": 300, "escalate": False}
    doubled = {"restarts": 4, "max_iters": 300, "escalate": False}
    for kind, key, sign in (("minent", "min_output_entropy", 1), ("chi", "chi", -1)):
        a = H.run_experiment(_cfg(kind=kind, channels=["random:d_in=3,d_out=2,d_env=2,seed=2"], options=base))
        b = H.run_experiment(_cfg(kind=kind, channels=["random:d_in=3,d_out=2,d_env=2,seed=2"], options=doubled))
        va, vb = a.results[0][key]["value"], b.results[0][key]["value"]
        assert sign * (vb - va) <= 1e-12


def test_csv_rows_carry_bound_directions():
    rep = H.run_experiment(_cfg(kind="minent-additivity", channels=["depolarizing:p=0.2"]))
    rows = list(csv.reader(io.StringIO(rep.to_csv())))
    assert rows[0] == ["experiment", "kind", "quantity", "value", "bound_direction"]
    gap = [r for r in rows if r[2] == "gap"]
    assert len(gap) == 1 and gap[0][4]


def test_grid_bound_examples():
    ident = H.qubit_grid_search(C.identity_channel(2), resolution=30)
    assert ident.grid_min <= 1e-12 and ident.value == 0.0
    dep = C.depolarizing_channel(0.5)
    g = H.qubit_grid_search(dep, resolution=180)
    assert abs(g.grid_min - h2(0.25)) <= 1e-6
    assert abs(H.qubit_grid_lower_bound(dep, 180) - h2(0.25)) <= 1e-6
    assert g.heuristic
    with pytest.raises(DimensionError):
        H.qubit_grid_search(C.identity_channel(3))


@pytest.mark.parametrize("seed", range(4))
def test_grid_value_not_below_optimizer(seed):
    ch = C.random_channel(2, 2, 2, seed=seed)
    est = Q.min_output_entropy(ch, Q.OptimizerOptions(restarts=8))
    g = H.qubit_grid_search(ch, resolution=90)
    assert g.grid_min >= est.value - 1e-9
    assert g.value <= g.grid_min


def test_state_specs():
    epr = H.load_state("epr")
    assert epr.dims == (2, 2)
    np.testing.assert_allclose(np.linalg.eigvalsh(epr.matrix)[-1], 1.0)
    w = H.load_state("werner:p=0.8").matrix
    np.testing.assert_allclose(np.trace(w), 1.0)
    assert H.load_state("maxmixed:d=3").dim == 3
    r = H.load_state("random:dim=4,rank=2,seed=1,dims=2x2")
    assert r.dims == (2, 2) and np.linalg.matrix_rank(r.matrix, tol=1e-10) == 2
    assert H.parse_dims("2x3") == (2, 3) == H.parse_dims("2,3")
    for bad in ("nonsense", "werner", "werner:q=1"):
        with pytest.raises(ConfigError):
            H.load_state(bad)


def test_config_errors():
    with pytest.raises(ConfigError):
        H.ExperimentConfig.from_dict({"kind": "bogus"})
    with pytest.raises(ConfigError):
        H.ExperimentConfig.from_dict({"kind": "chi", "extra": 1})
    with pytest.raises(ConfigError):
        H.ExperimentConfig.from_dict({"kind": "chi", "options": {"restarts": 0}})
    with pytest.raises(ConfigError):
        H.run_experiment(H.ExperimentConfig.from_dict({"kind": "minent-additivity"}))


def test_cli_exit_codes(tmp_path, capsys):
    assert H.main(["validate", "--channel", "depolarizing:p=0.3", "--restarts", "2"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["results"][0]["passed"] is True
    assert H.main(["validate", "--state", "diag:0.5,0.6"]) == 2
    assert H.main(["minent", "--channel", "nonexistent:p=1"]) == 3
    capsys.readouterr()
    report = tmp_path / "r.csv"
    code = H.main(["additivity", "--kind", "minent", "--channel", "identity:d=2", "--restarts", "2",
                   "--format", "csv", "--report", str(report)])
    assert code == 0
    assert report.read_text().startswith("experiment,kind,quantity,value,bound_direction")


def test_cli_config_batch(tmp_path, capsys):
    cfg = {
        "seed": 3,
        "options": {"restarts": 2, "max_iters": 300},
        "experiments": [
            {"kind": "minent", "channels": ["depolarizing:p=0.5"], "name": "a"},
            {"kind": "eof", "states": ["epr"], "name": "b"},
        ],
    }
    path = tmp_path / "exp.json"
    path.write_text(json.dumps(cfg))
    assert H.main(["--config", str(path)]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert [r["name"] for r in rep["results"]] == ["a", "b"]
    assert rep["seed"] == 3
    assert abs(rep["results"][0]["min_output_entropy"]["value"] - h2(0.25)) <= 1e-9
    assert abs(rep["results"][1]["eof"]["value"] - 1.0) <= 1e-9
    bad = tmp_path / "bad.json"
    bad.write_text("[1, 2]")
    assert H.main(["--config", str(bad)]) == 3
