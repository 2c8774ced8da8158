import json
import subprocess
import sys
from pathlib import Path

import pytest

from longjump.cli import main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _write(tmp_path, text, name="c.yaml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_run_passes(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", str(CONFIGS / "c12_ladder.yaml"), "--out", str(out), "--no-plots"]) == 0
    assert "PASS ladder:lambda_1" in capsys.readouterr().out
    summary = json.loads((out / "summary.json").read_text())
    assert all(r["pass"] for r in summary["rows"])


def test_run_failing_row_exits_one(tmp_path):
    cfg = _write(tmp_path, "experiment: ladder\nmodel.n: 64\nmodel.gamma: 1.5\noptions.delta: 0.25\n"
                           "options.expected: {N: 8}\n")
    assert main(["run", cfg, "--out", str(tmp_path / "o"), "--no-plots"]) == 1


@pytest.mark.parametrize("text", [
    "experiment: ladder\nmodel.n: 64\nmodel.gamma: 2.5\n",
    "experiment: nope\nmodel.n: 64\nmodel.gamma: 1.5\n",
    "experiment: ladder\nmodel.n: 64\nmodel.gamma: 1.5\noptions.delta: 1.5\n",
    "experiment: ladder\nmodel.n: 64\n",
    "experiment: [unclosed\n",
])
def test_invalid_config_exits_two(tmp_path, text):
    assert main(["run", _write(tmp_path, text), "--out", str(tmp_path / "o")]) == 2


def test_workers_must_be_positive(tmp_path):
    assert main(["run", str(CONFIGS / "c12_ladder.yaml"), "--workers", "0"]) == 2


def test_oracle(tmp_path, capsys):
    cfg = _write(tmp_path, "experiment: stationarity\nmodel.n: 6\nmodel.gamma: 1.5\nmodel.c_plus: 2\n"
                           "model.c_minus: 1\nmodel.alpha_a: 1\nmodel.beta: 0.5\nmodel.beta_a: 0.5\n")
    assert main(["oracle", cfg, "--out", str(tmp_path / "o")]) == 0
    text = capsys.readouterr().out
    assert "nu_b_invariance_sup" in text and "generator_closed_form" in text
    big = _write(tmp_path, "experiment: stationarity\nmodel.n: 20\nmodel.gamma: 1.5\n", "big.yaml")
    assert main(["oracle", big]) == 2


def test_tables(tmp_path):
    out = tmp_path / "o"
    cfg = _write(tmp_path, "experiment: ladder\nmodel.n: 32\nmodel.gamma: 1.8\nmodel.beta: 0.3\n"
                           "model.beta_a: 0.3\nmodel.c_plus: 2\nmodel.c_minus: 1\nmodel.alpha_a: 1\n")
    assert main(["tables", cfg, "--out", str(out)]) == 0
    regime = json.loads((out / "tables" / "regime.json").read_text())
    assert regime["theorem"] == "SBE_unique"
    assert (out / "tables" / "kernel.csv").exists()
    header = (out / "tables" / "operators_G.csv").read_text().splitlines()[0]
    assert header == "u,G,K_ab,R_ab,L_cont,error_coef,asym_linear"


def test_sweep(tmp_path, capsys):
    out = tmp_path / "o"
    code = main(["sweep", str(CONFIGS / "c12_ladder.yaml"), "--vary", "options.delta=0.25,0.5",
                 "--out", str(out), "--no-plots"])
    # The expected values only hold at delta = 1/4, so the second variant fails.
    assert code == 1
    assert (out / "options.delta=0.25" / "summary.json").exists()
    assert (out / "options.delta=0.5" / "summary.json").exists()
    assert main(["sweep", str(CONFIGS / "c12_ladder.yaml"), "--vary", "oops"]) == 2


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "longjump.cli", "run", str(CONFIGS / "c12_ladder.yaml"),
                           "--out", str(tmp_path / "o"), "--no-plots", "--seed", "3"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0, proc.stderr
