import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from olaq.bfp import QuantizedBlock
from olaq.cli import main, parse_seeds
from olaq.errors import ConfigError
from olaq.serialize import load_decomposition, load_tensor, save_tensor

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture
def tensor_file(tmp_path, rng):
    x = rng.standard_normal((16, 12)).astype(np.float32)
    x[:, 3] += 60
    path = tmp_path / "x.bin"
    save_tensor(path, x)
    return path


def test_parse_seeds():
    assert parse_seeds("1..5") == [1, 2, 3, 4, 5]
    assert parse_seeds("3, 1..2,9") == [3, 1, 2, 9]
    with pytest.raises(ConfigError):
        parse_seeds("a..b")


def test_quantize(tmp_path, tensor_file, capsys):
    out = tmp_path / "q.bin"
    assert main(["quantize", "--in", str(tensor_file), "--bits", "12", "--out", str(out)]) == 0
    qb = load_tensor(out)
    assert isinstance(qb, QuantizedBlock) and qb.bit_width == 12 and qb.shape == (16, 12)
    assert "12 bits" in capsys.readouterr().out


@pytest.mark.parametrize("approach", ["1", "2"])
def test_decompose(tmp_path, tensor_file, approach):
    out = tmp_path / "d.olqc"
    assert main(["decompose", "--in", str(tensor_file), "--gamma", "5", "--approach", approach, "--out", str(out)]) == 0
    d = load_decomposition(out)
    assert d.mask.mode == ("column" if approach == "1" else "element")
    assert d.mask.count > 0


def test_gemm_verify(tmp_path, rng, capsys):
    a, b = tmp_path / "a.bin", tmp_path / "b.bin"
    save_tensor(a, QuantizedBlock(rng.integers(-127, 128, (7, 9)), 8, -3))
    save_tensor(b, rng.standard_normal((9, 4)).astype(np.float32))
    assert main(["gemm-verify", "--a", str(a), "--b", str(b), "--workers", "3"]) == 0
    assert capsys.readouterr().out.startswith("match")
    # inner dimensions disagree: validation error
    assert main(["gemm-verify", "--a", str(a), "--b", str(a)]) == 2


def test_gemm_verify_reports_mismatch(tmp_path, rng, monkeypatch, capsys):
    a = tmp_path / "a.bin"
    save_tensor(a, QuantizedBlock(rng.integers(-127, 128, (3, 3)), 8, 0))

    def broken(x, y):
        out = np.asarray(x, dtype=object) @ np.asarray(y, dtype=object)
        out[1, 2] += 1
        return out

    monkeypatch.setattr("olaq.cli.bigint_matmul", broken)
    assert main(["gemm-verify", "--a", str(a), "--b", str(a)]) == 1
    assert "[1, 2]" in capsys.readouterr().out


def test_analyze(tmp_path, tensor_file, capsys):
    out = tmp_path / "r.json"
    assert main(["analyze", "--in", str(tensor_file), "--gamma", "5", "--bins", "16", "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "hcr_bound = " in text and "mixture_tv_distance = 0.0" in text
    report = json.loads(out.read_text())
    assert report["n"] == 16 * 12 and report["bits"] == 8


def _small_config(tmp_path, mode="approach2"):
    path = tmp_path / "c.toml"
    path.write_text(f'mode = "{mode}"\ndims = [8, 8, 2]\nepochs = 1\nlr_scale = 100.0\n'
                    "[dataset]\nn_samples = 64\nn_features = 8\n"
                    "[dataset.injection]\ncolumns = 1\nscale = 30.0\n")
    return path


def test_train(tmp_path, capsys):
    out = tmp_path / "m.json"
    assert main(["train", "--config", str(_small_config(tmp_path)), "--out", str(out)]) == 0
    assert "final_accuracy=" in capsys.readouterr().out
    assert json.loads(out.read_text())["gemm_counts"] == {"8": 6 * 2 * 2}


def test_compare(tmp_path, capsys):
    out, table = tmp_path / "s.json", tmp_path / "t.csv"
    argv = ["compare", "--config", str(_small_config(tmp_path)), "--seeds", "1..2",
            "--modes", "untreated,approach2", "--out", str(out), "--table", str(table)]
    assert main(argv) == 0
    printed = capsys.readouterr().out
    assert printed == table.read_text()
    assert [r["mode"] for r in json.loads(out.read_text())["rows"]] == ["untreated", "approach2"]


def test_exit_codes(tmp_path, tensor_file):
    # validation errors
    assert main(["quantize", "--in", str(tensor_file), "--bits", "4", "--out", str(tmp_path / "q")]) == 2
    assert main(["compare", "--config", str(_small_config(tmp_path)), "--seeds", "1"]) == 2
    bad = tmp_path / "bad.toml"
    bad.write_text("epochs = -3\n")
    assert main(["train", "--config", str(bad)]) == 2
    junk = tmp_path / "junk.bin"
    junk.write_bytes(b"nope")
    assert main(["analyze", "--in", str(junk)]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["decompose", "--in", str(tensor_file), "--approach", "3", "--out", "x"])
    assert exc.value.code == 2
    # runtime error: unreadable input
    assert main(["quantize", "--in", str(tmp_path / "missing.bin"), "--out", str(tmp_path / "q")]) == 1


def test_console_entry_point(tmp_path, tensor_file):
    proc = subprocess.run([sys.executable, "-m", "olaq", "analyze", "--in", str(tensor_file)],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and "sensitivity_ratio" in proc.stdout
