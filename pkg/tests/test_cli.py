import json

import numpy as np
import pytest

from covdesign.cli import RunConfig, main
from covdesign.errors import InvalidArgument
from covdesign.synthesis import PointSet, min_pairwise_distance


def run(ws, *argv):
    return main([*argv, "--workspace", str(ws)])


def _files(ws):
    return {p.relative_to(ws): p.read_bytes() for p in ws.rglob("*")
            if p.is_file() and p.parent != ws}


@pytest.fixture(scope="module")
def designed(tmp_path_factory):
    ws = tmp_path_factory.mktemp("ws")
    argv = ["design", "--n", "100", "--d", "2", "--family", "sfsd", "--p0-grid", "1.0,1.5"]
    assert run(ws, *argv) == 0
    return ws, argv


def test_design_writes_artifacts(designed):
    ws, _ = designed
    report = (ws / "reports" / "design_sfsd_n100_d2.txt").read_text()
    assert "feasible = true" in report
    assert (ws / "profiles" / "pcf_sfsd_n100_d2.csv").read_text().startswith("r,G\n")
    assert (ws / "profiles" / "psd_sfsd_n100_d2.csv").read_text().startswith("k,P\n")
    entries = [json.loads(line) for line in (ws / "manifest.jsonl").read_text().splitlines()]
    assert entries[0]["command"].startswith("covdesign design")
    assert "reports/design_sfsd_n100_d2.txt" in entries[0]["outputs"]


def test_design_is_byte_identical(designed, tmp_path):
    ws, argv = designed
    assert run(tmp_path, *argv) == 0
    for name in ("reports/design_sfsd_n100_d2.txt", "profiles/pcf_sfsd_n100_d2.csv",
                 "profiles/psd_sfsd_n100_d2.csv", "reports/realizability_sfsd_n100_d2.txt"):
        assert (tmp_path / name).read_bytes() == (ws / name).read_bytes()


def test_synthesize_roundtrip(designed, tmp_path):
    ws, _ = designed
    params = str(ws / "reports" / "design_sfsd_n100_d2.txt")
    assert run(tmp_path / "a", "synthesize", "--params", params, "--iters", "20", "--seed", "4") == 0
    assert run(tmp_path / "b", "synthesize", "--params", params, "--iters", "20", "--seed", "4") == 0
    a, b = _files(tmp_path / "a"), _files(tmp_path / "b")
    assert a == b
    csv = tmp_path / "a" / "designs" / "synth_sfsd_n100_d2_alr_s4.csv"
    meta = (tmp_path / "a" / "designs" / "synth_sfsd_n100_d2_alr_s4.csv.meta").read_text()
    pts = PointSet.from_csv(csv)
    assert f"min_distance = {min_pairwise_distance(pts)!r}" in meta
    assert "final_objective = " in meta


def test_flags_override_config(designed, tmp_path):
    ws, _ = designed
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"synthesis": {"iters": 5}}))
    params = str(ws / "reports" / "design_sfsd_n100_d2.txt")
    assert run(tmp_path, "synthesize", "--params", params, "--config", str(cfg)) == 0
    trace = (tmp_path / "reports" / "trace_sfsd_n100_d2_alr_s0.csv").read_text().splitlines()
    assert len(trace) == 6
    assert run(tmp_path, "synthesize", "--params", params, "--config", str(cfg), "--iters", "7") == 0
    trace = (tmp_path / "reports" / "trace_sfsd_n100_d2_alr_s0.csv").read_text().splitlines()
    assert len(trace) == 8


def test_generate_lhs(tmp_path):
    assert run(tmp_path, "generate", "--method", "lhs", "--n", "16", "--d", "3", "--seed", "7") == 0
    x = np.loadtxt(tmp_path / "designs" / "lhs_n16_d3_s7.csv", delimiter=",")
    assert x.shape == (16, 3)


def test_workspace_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("COVDESIGN_WORKSPACE", str(tmp_path))
    assert main(["generate", "--method", "random", "--n", "4", "--d", "2"]) == 0
    assert (tmp_path / "designs" / "random_n4_d2_s0.csv").is_file()


@pytest.mark.parametrize(
    "argv,code",
    [
        (["design", "--n", "10", "--d", "9"], 2),
        (["generate", "--method", "sobol", "--n", "8", "--d", "12"], 2),
        (["generate", "--method", "pds-dart", "--r-min", "0.9", "--n", "5", "--d", "2"], 3),
        (["eval", "--kind", "blind", "--trials", "0"], 2),
        (["report", "--coverage", "--families", "pds,halton"], 2),
        (["synthesize", "--params", "missing.txt"], 2),
        (["frobnicate"], 2),
    ],
)
def test_exit_codes(tmp_path, argv, code):
    assert run(tmp_path, *argv) == code


def test_eval_blind_small(tmp_path):
    argv = ["eval", "--kind", "blind", "--function", "ackley", "--d", "2", "--n", "20",
            "--trials", "3", "--method", "random"]
    assert run(tmp_path, *argv) == 0
    text = (tmp_path / "reports" / "eval_blind_random_ackley_d2_n20.csv").read_text()
    header, row = text.splitlines()
    assert header == "method,function,d,n,trials,mse_mean,mse_std"
    assert row.startswith("random,ackley,2,20,3,")


def test_eval_seqopt_traces(tmp_path):
    argv = ["eval", "--kind", "seqopt", "--function", "alpine1", "--d", "2", "--init", "10",
            "--budget", "4", "--trials", "2", "--method", "lhs"]
    assert run(tmp_path, *argv) == 0
    trace = (tmp_path / "reports" / "trace_seqopt_lhs_alpine1_d2_n10_b4_t1.csv").read_text()
    assert trace.splitlines()[0] == "iter,best_value"
    assert len(trace.splitlines()) == 5


def test_report_rows(tmp_path):
    assert run(tmp_path, "report", "--coverage", "--n", "100", "--d", "2,3", "--families", "pds") == 0
    rows = (tmp_path / "reports" / "coverage_n100_d2-3.csv").read_text().splitlines()
    assert rows[0] == "family,d,n,r_min,rho,feasible"
    assert [r.split(",")[:3] for r in rows[1:]] == [["pds", "2", "100"], ["pds", "3", "100"]]


def test_config_rejects_unknown_keys():
    with pytest.raises(InvalidArgument):
        RunConfig.from_mapping({"synthesis": {"itres": 5}})
    with pytest.raises(InvalidArgument):
        RunConfig.from_mapping({"version": 2})
    assert RunConfig.from_mapping({"eval": {"trials": 3}}).eval.trials == 3
