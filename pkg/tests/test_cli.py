import json
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

from basinforge import cli

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def write_config(tmp_path, text, name="run.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


GENERAL = """
pipeline = "general"
horizon = 800
trains = 5

[sequence]
family = "full-random"
seed = 0
C = {C}
D = 0.5
pattern = "alternating"
train_law = "general"
x = 1.5

[ledger]
k = 2.1
x = 1.5
delta = 0.05
"""


class TestConfigErrors:
    @pytest.mark.parametrize("C", [0.2, 0.4])
    def test_general_rejected(self, tmp_path, C, capsys):
        path = write_config(tmp_path, GENERAL.format(C=C))
        assert cli.main(["--config", path, "--verify-only"]) == cli.EXIT_CONFIG
        assert "config error" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert cli.main(["--config", str(tmp_path / "nope.toml")]) == cli.EXIT_CONFIG

    def test_no_sequence_table(self, tmp_path):
        path = write_config(tmp_path, 'pipeline = "diagonal"\n')
        assert cli.main(["--config", path]) == cli.EXIT_CONFIG

    def test_bad_slice(self, tmp_path):
        path = str(CONFIGS / "autonomous.toml")
        assert cli.main(["--config", path, "--slice", "vary=q"]) == cli.EXIT_CONFIG

    def test_unparsable_summary(self, tmp_path):
        p = tmp_path / "s.json"
        p.write_text("{not json")
        assert cli.main(["--render", str(p)]) == cli.EXIT_CONFIG


class TestRuns:
    def test_diagonal_loads_and_passes(self, tmp_path):
        out = tmp_path / "d"
        assert cli.main(["--config", str(CONFIGS / "diagonal.toml"), "--out", str(out)]) == cli.EXIT_OK
        summary = json.loads((out / "summary.json").read_text())
        assert summary["status"] == "ok" and summary["failed"] == []

    def test_general_loads(self, tmp_path):
        path = write_config(tmp_path, GENERAL.format(C=0.3))
        assert cli.main(["--config", path, "--verify-only", "--out", str(tmp_path / "g")]) == cli.EXIT_OK

    def test_deterministic_bytes(self, tmp_path):
        cfg = str(CONFIGS / "diagonal.toml")
        for d in ("a", "b"):
            assert cli.main(["--config", cfg, "--seed", "4", "--out", str(tmp_path / d)]) == 0
        assert (tmp_path / "a" / "summary.json").read_bytes() == (tmp_path / "b" / "summary.json").read_bytes()

    def test_fornaess_warns_but_exits_zero(self, tmp_path, capsys):
        out = tmp_path / "f"
        assert cli.main(["--config", str(CONFIGS / "fornaess.toml"), "--out", str(out)]) == cli.EXIT_OK
        summary = json.loads((out / "summary.json").read_text())
        assert summary["status"] == "warning"
        assert "warning:" in capsys.readouterr().out

    def test_autonomous_slice_writes_ppm(self, tmp_path):
        out = tmp_path / "a"
        args = ["--config", str(CONFIGS / "autonomous.toml"), "--slice", "vary=w,extent=4,res=12", "--out", str(out)]
        assert cli.main(args) == cli.EXIT_OK
        ppms = list(out.glob("*.ppm"))
        assert len(ppms) == 1
        data = ppms[0].read_bytes()
        assert data.startswith(b"P6\n12 12\n255\n") and len(data) == len(b"P6\n12 12\n255\n") + 3 * 144

    def test_verify_only_skips_sampling(self, tmp_path):
        full, fast = tmp_path / "full", tmp_path / "fast"
        cfg = str(CONFIGS / "diagonal.toml")
        cli.main(["--config", cfg, "--out", str(full)])
        cli.main(["--config", cfg, "--out", str(fast), "--verify-only"])
        s_full = json.loads((full / "summary.json").read_text())
        s_fast = json.loads((fast / "summary.json").read_text())
        assert set(s_fast["checks"]) < set(s_full["checks"])


class TestRender:
    def test_header_only_for_empty_summary(self, tmp_path, capsys):
        p = tmp_path / "s.json"
        p.write_text(json.dumps({"pipeline": "diagonal", "status": "ok", "checks": {}}))
        assert cli.main(["--render", str(p)]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 2 and lines[1].startswith("check")

    def test_rows_per_check(self, tmp_path):
        summary = {"pipeline": "x", "status": "fail", "checks": {"grp": {"checks": [
            {"name": "a", "passed": True, "min_slack": 0.5, "count": 3},
            {"name": "b", "passed": False, "min_slack": "-inf", "count": 1}]}}}
        p = tmp_path / "s.json"
        p.write_text(json.dumps(summary))
        text = cli.report_render(str(p))
        assert "grp.a" in text and "grp.b" in text and " NO " in text

    def test_dumps_handles_nonfinite_and_complex(self):
        text = cli.dumps({"x": float("inf"), "z": 1 + 2j})
        assert json.loads(text) == {"x": "inf", "z": [1.0, 2.0]}


@pytest.mark.skipif(shutil.which("basinforge") is None, reason="console script not installed")
def test_console_script_exit_code(tmp_path):
    path = write_config(tmp_path, GENERAL.format(C=0.4))
    proc = subprocess.run(["basinforge", "--config", path], capture_output=True, text=True)
    assert proc.returncode == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "basinforge", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "--render" in proc.stdout
