import json
import math
import os
import pathlib

import pytest

import smcprog

SOURCE = pathlib.Path(os.environ.get("SMCPROG_SOURCE_DIR", pathlib.Path(__file__).resolve().parents[2]))
CONFIGS = SOURCE / "configs"


def test_digest_is_fnv1a64():
    assert smcprog.fnv1a64("") == 0xCBF29CE484222325
    assert smcprog.fnv1a64("hello") == 0xA430D84680AABD0B


def test_weights_and_resampling():
    log_w, w = smcprog.compute_weights([0.0, 0.5, 1.0], 2.0)
    assert log_w == pytest.approx([0.0, 1.0, 2.0])
    assert w == pytest.approx([0.0900305731703805, 0.2447284710547977, 0.6652409557748219], abs=1e-15)
    assert smcprog.systematic_resample([0.1, 0.2, 0.3, 0.4], 0.2) == [1, 2, 3, 3]


def test_schedule_on_constant_rewards():
    assert smcprog.next_lambda([0.3] * 10, 0.0, 20.0, 0.9, 3) == pytest.approx(1 / 3)
    assert smcprog.ess([1.0, 0.0], 0.0, 0.0, 5.0) == pytest.approx(2.0)


def test_exact_oracles():
    p = smcprog.exact_tilted([0.5, 0.5], [0.0, 1.0], math.log(3.0))
    assert p == pytest.approx([0.25, 0.75])
    assert smcprog.bitflip_invariance_residual(4, 5.0) < 1e-12
    assert smcprog.bitflip_invariance_residual(4, 5.0, full_ratio=False) < 1e-12
    assert 1.0 <= smcprog.path_gamma([0.5, 0.5], [0.0, 1.0], 2.0) <= math.exp(2.0)


def test_theorem1_small():
    res = smcprog.theorem1(n_runs=3)
    assert res["runs"] == 3
    assert res["successes"] >= 2


def test_run_export_resume(tmp_path):
    code, out, err = smcprog.run(str(CONFIGS / "onemax_bitflip.json"), run_dir=str(tmp_path / "r"), stop_after_epoch=2)
    assert code == 0, err
    assert smcprog.summarize(tmp_path / "r")["status"] == "incomplete"
    code, out, err = smcprog.resume(str(tmp_path / "r"))
    assert code == 0, err
    summary = smcprog.summarize(tmp_path / "r")
    assert summary["status"] == "terminated"
    assert summary["best"]["reward"] > 0.5
    assert smcprog.diagnostics(tmp_path / "r")["kappa"] == 0.5
    code, out, _ = smcprog.export(str(tmp_path / "r"), "schedule")
    assert code == 0
    assert (tmp_path / "r" / "export" / "schedule.csv").exists()


def test_dry_run_and_errors(tmp_path):
    code, out, _ = smcprog.run(str(CONFIGS / "onemax_bitflip.json"), run_dir=str(tmp_path / "d"), dry_run=True)
    assert code == 0
    assert json.loads(out)["max_proposals"] == 2 * 32 * 4 * 20
    code, _, err = smcprog.oracle_check("nope")
    assert code == 2
    assert json.loads(err)["error"]["code"] == "UnknownSuite"
    with pytest.raises(smcprog.SmcError):
        smcprog.summarize(tmp_path / "missing")


def test_mock_llm_run(tmp_path, monkeypatch):
    monkeypatch.setenv("SMCPROG_API_KEY", "sk-python-smoke")
    server = smcprog.MockLlmServer(api_key="sk-python-smoke")
    server.start()
    try:
        cfg = json.loads((CONFIGS / "onemax_mock_llm.json").read_text())
        cfg["llm"]["base_url"] = server.base_url
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg))
        code, _, err = smcprog.run(str(path), run_dir=str(tmp_path / "m"))
        assert code == 0, err
        summary = smcprog.summarize(tmp_path / "m")
        assert summary["llm_calls"] > 0
        assert server.requests >= summary["llm_calls"]
        assert "sk-python-smoke" not in (tmp_path / "m" / "transcripts.jsonl").read_text()
    finally:
        server.stop()
