import subprocess
import sys

import pytest

from autonet.cli import main


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0


def test_bad_usage_exits_two(capsys):
    assert main([]) == 2
    assert main(["run", "case-z"]) == 2
    assert main(["case-a", "--seed", "x"]) == 2


def test_run_all_with_assert_passes(tmp_path, capsys):
    assert main(["run", "all", "--config", "default", "--out", str(tmp_path), "--assert"]) == 0
    out = capsys.readouterr().out
    assert "[FAIL]" not in out and out.count("[PASS]") == 6
    for name in ("traces.csv", "mttr.csv", "report.txt"):
        assert (tmp_path / name).is_file()
    assert len(list((tmp_path / "logs").glob("*.jsonl"))) == 12


def test_single_mode_run(tmp_path, capsys):
    assert main(["case-b", "--mode", "withagent", "--out", str(tmp_path)]) == 0
    assert [p.name for p in (tmp_path / "logs").iterdir()] and not (tmp_path / "traces.csv").exists()


def test_failed_acceptance_exits_one(tmp_path, capsys):
    from autonet.harness.config import default_config_dir

    # A shorter review step shifts every WithAgent analysis time.
    (tmp_path / "cfg").mkdir()
    d = default_config_dir()
    text = (d / "case_b.yaml").read_text().replace("review_s: 55", "review_s: 5")
    assert text != (d / "case_b.yaml").read_text()
    for name in ("case_a.yaml", "knowledge.yaml"):
        (tmp_path / "cfg" / name).write_text((d / name).read_text())
    (tmp_path / "cfg" / "case_b.yaml").write_text(text)
    rc = main(["run", "case-b", "--config", str(tmp_path / "cfg"), "--out", str(tmp_path / "o"), "--assert"])
    assert rc == 1
    assert "[FAIL] 2a" in capsys.readouterr().out


def test_missing_kb_exits_three_and_names_path(tmp_path, capsys):
    missing = tmp_path / "missing-kb.yaml"
    assert main(["run", "case-a", "--kb", str(missing), "--out", str(tmp_path)]) == 3
    assert "missing-kb.yaml" in capsys.readouterr().err


def test_validate_and_tools(capsys):
    assert main(["validate"]) == 0
    assert "knowledge base: ok" in capsys.readouterr().out
    assert main(["tools", "--latency", "restart_node=1"]) == 0
    assert "latency_ms: 1\n" in capsys.readouterr().out
    assert main(["tools", "--latency", "restart_node"]) == 3


@pytest.fixture(scope="module")
def logs(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert main(["run", "all", "--out", str(out)]) == 0
    return out / "logs"


def test_replay_matches(logs, capsys):
    assert main(["replay", str(logs / "case-b_HttpConnExhaustion_WithAgent.jsonl")]) == 0
    assert main(["replay", str(logs / "case-a_Hana.jsonl")]) == 0
    assert "replay matches" in capsys.readouterr().out


def test_replay_reports_edited_line(logs, tmp_path, capsys):
    lines = (logs / "case-b_AmfUnreachable_RuleBased.jsonl").read_text().splitlines()
    idx = next(i for i, line in enumerate(lines) if '"kind":"assigned"' in line)
    lines[idx] = lines[idx].replace('{"t":', '{"t":1', 1)
    edited = tmp_path / "edited.jsonl"
    edited.write_text("\n".join(lines) + "\n")
    assert main(["replay", str(edited)]) == 1
    assert f"line {idx + 1}" in capsys.readouterr().out


def test_replay_rejects_empty_and_missing(tmp_path, capsys):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    assert main(["replay", str(empty)]) == 3
    assert "header" in capsys.readouterr().err
    assert main(["replay", str(tmp_path / "absent.jsonl")]) == 3
    bad = tmp_path / "v9.jsonl"
    bad.write_text('{"format":"autonet-eventlog","version":9}\n')
    assert main(["replay", str(bad)]) == 3
    assert "version" in capsys.readouterr().err


def test_console_entry_point_runs():
    res = subprocess.run([sys.executable, "-m", "autonet.cli", "validate"], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
