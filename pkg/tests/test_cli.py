import json
import shutil
import subprocess
import sys

import pytest

from peeldag.cli import EXIT_DATA, EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, main

FAST = ["--n-gamma", "10", "--max-kappa", "5"]


@pytest.fixture
def sim(tmp_path):
    out = tmp_path / "data"
    assert main(["simulate", "--p", "4", "--q", "8", "--n", "150", "--seed", "7",
                 "--out-dir", str(out)]) == EXIT_OK
    return out


def data_args(d):
    return ["--y", str(d / "y.csv"), "--x", str(d / "x.csv")]


def test_simulate_outputs(sim):
    truth = json.loads((sim / "truth.json").read_text())
    assert truth["p"] == 4 and truth["q"] == 8
    assert truth["supergraph"]["schema_version"] == 1
    assert len((sim / "y.csv").read_text().splitlines()) == 150


def test_learn_writes_everything(sim, tmp_path):
    out = tmp_path / "s.json"
    code = main(["learn", *data_args(sim), *FAST, "--out", str(out), "--trace", str(tmp_path / "t.json"),
                 "--dump-v", str(tmp_path / "v.csv"), "--refit", str(tmp_path / "refit")])
    assert code == EXIT_OK
    s = json.loads(out.read_text())
    assert s["p"] == 4 and len(s["heights"]) == 4
    trace = json.loads((tmp_path / "t.json").read_text())
    assert {r["height"] for r in trace["rounds"]} == set(range(len(trace["rounds"])))
    assert len(trace["tuning"]) == 4
    assert (tmp_path / "refit" / "u.csv").exists()
    assert json.loads((tmp_path / "refit" / "edges.json").read_text())["p"] == 4


def test_test_edge_json_and_summary(sim, tmp_path, capsys):
    hyp = tmp_path / "h.json"
    hyp.write_text("[[1, 4]]")
    out = tmp_path / "r.json"
    code = main(["test-edge", *data_args(sim), *FAST, "--hypothesis", str(hyp), "--replicates", "20",
                 "--method", "both", "--oracle-supergraph", str(sim / "truth.json"), "--out", str(out)])
    assert code == EXIT_OK
    rep = json.loads(out.read_text())
    assert rep["hypothesis"] == [[1, 4]]
    assert rep["method"] == "dp-oracle" and rep["asymptotic"]["method"] == "olr"
    assert 0.0 <= rep["pvalue"] <= 1.0
    assert "p-value" in capsys.readouterr().err


def test_pathway_with_bare_supergraph(sim, tmp_path):
    sg = json.loads((sim / "truth.json").read_text())["supergraph"]
    (tmp_path / "sg.json").write_text(json.dumps(sg))
    hyp = tmp_path / "h.json"
    hyp.write_text('{"edges": [[1, 2], [2, 3]]}')
    code = main(["test-path", *data_args(sim), "--hypothesis", str(hyp), "--method", "asymptotic",
                 "--oracle-supergraph", str(tmp_path / "sg.json"), "--out", str(tmp_path / "r.json")])
    assert code == EXIT_OK
    assert json.loads((tmp_path / "r.json").read_text())["mode"] == "pathway"


def test_eval(tmp_path, capsys):
    (tmp_path / "a.json").write_text("[[1, 2], [2, 3]]")
    (tmp_path / "b.json").write_text("[[1, 2], [1, 3]]")
    assert main(["eval", "--estimated", str(tmp_path / "a.json"), "--truth", str(tmp_path / "b.json")]) == 0
    assert json.loads(capsys.readouterr().out)["shd"] == 2


def test_experiment_csv_and_json(tmp_path, capsys):
    design = {"kind": "test", "design": {"p": 4, "q": 8, "n": 150, "seed": 1},
              "hypothesis": [[1, 4]], "reps": 2, "methods": ["lr", "olr"]}
    (tmp_path / "d.json").write_text(json.dumps(design))
    assert main(["experiment", "--design", str(tmp_path / "d.json"), "--out", str(tmp_path / "r.csv")]) == 0
    assert (tmp_path / "r.csv").read_text().startswith("method,level,value")
    assert main(["experiment", "--design", str(tmp_path / "d.json"), "--format", "json"]) == 0
    rows = json.loads(capsys.readouterr().out)["rows"]
    assert {r["method"] for r in rows} == {"lr", "olr"}
    assert rows[0]["mean_contained"] is None


def test_config_file_overrides(sim, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"n_gamma": 5, "out": str(tmp_path / "s.json")}))
    assert main(["learn", *data_args(sim), "--config", str(cfg)]) == EXIT_OK
    assert (tmp_path / "s.json").exists()
    cfg.write_text(json.dumps({"bogus": 1}))
    assert main(["learn", *data_args(sim), "--config", str(cfg)]) == EXIT_USAGE


def test_exit_codes(sim, tmp_path):
    assert main(["learn"]) == EXIT_USAGE
    assert main(["learn", "--y", str(tmp_path / "none.csv"), "--x", str(sim / "x.csv")]) == EXIT_DATA
    bad = tmp_path / "bad.csv"
    bad.write_text("1,2\n3,oops\n")
    assert main(["learn", "--y", str(bad), "--x", str(sim / "x.csv")]) == EXIT_DATA
    short = tmp_path / "short.csv"
    short.write_text("1\n2\n")
    assert main(["learn", "--y", str(short), "--x", str(sim / "x.csv")]) == EXIT_DATA
    hyp = tmp_path / "h.json"
    hyp.write_text("[[1, 9]]")
    assert main(["test-edge", *data_args(sim), *FAST, "--hypothesis", str(hyp),
                 "--method", "asymptotic"]) == EXIT_DATA
    assert main(["learn", *data_args(sim), "--threads", "0"]) == EXIT_USAGE


def test_numerical_failure_exit_code(tmp_path):
    # an intervention that never varies leaves no node instrumented, so peeling stalls
    (tmp_path / "y.csv").write_text("\n".join(f"{i % 3},{(i * 7) % 5}" for i in range(30)) + "\n")
    (tmp_path / "x.csv").write_text("0\n" * 30)
    code = main(["learn", "--y", str(tmp_path / "y.csv"), "--x", str(tmp_path / "x.csv"), *FAST])
    assert code == EXIT_NUMERICAL


def test_bad_oracle_document(sim, tmp_path):
    (tmp_path / "sg.json").write_text('{"p": 4}')
    (tmp_path / "h.json").write_text("[[1, 2]]")
    code = main(["test-edge", *data_args(sim), "--hypothesis", str(tmp_path / "h.json"),
                 "--method", "asymptotic", "--oracle-supergraph", str(tmp_path / "sg.json")])
    assert code == EXIT_DATA


def test_unknown_subcommand_is_usage_error():
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 2


@pytest.mark.skipif(shutil.which("peeldag") is None, reason="console script not installed")
def test_console_script():
    res = subprocess.run(["peeldag", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "test-edge" in res.stdout


def test_module_entry():
    res = subprocess.run([sys.executable, "-m", "peeldag.cli", "eval"], capture_output=True, text=True)
    assert res.returncode == EXIT_USAGE
