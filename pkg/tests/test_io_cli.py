import json
import struct
import subprocess
import sys

import numpy as np
import pytest

from conftest import random_point
from rgnhr.cli import main
from rgnhr.cpd import evaluate
from rgnhr.io import (
    load_cpd,
    load_tensor,
    load_tucker,
    read_dten,
    read_text_tensor,
    save_cpd,
    save_tensor,
    save_tucker,
    write_dten,
)
from rgnhr.tensor import st_hosvd


def test_dten_layout(tmp_path):
    T = np.arange(6.0).reshape(2, 3)
    path = tmp_path / "t.dten"
    write_dten(path, T)
    raw = path.read_bytes()
    assert raw[:4] == b"DTEN" and raw[4] == 2
    assert struct.unpack_from("<2Q", raw, 5) == (2, 3)
    assert struct.unpack_from("<6d", raw, 21) == tuple(range(6))
    np.testing.assert_array_equal(read_dten(path), T)


def test_dten_rejects_garbage(tmp_path):
    bad = tmp_path / "bad.dten"
    bad.write_bytes(b"NOPE")
    with pytest.raises(ValueError):
        read_dten(bad)
    short = tmp_path / "short.dten"
    short.write_bytes(b"DTEN" + struct.pack("<BQ", 1, 3) + struct.pack("<d", 1.0))
    with pytest.raises(ValueError):
        read_dten(short)


def test_text_loader(tmp_path):
    path = tmp_path / "t.txt"
    path.write_text("3 2 2 2\n1 2\n3 4\n5 6\n7 8\n")
    T = read_text_tensor(path)
    assert T.shape == (2, 2, 2) and T[1, 1, 1] == 8 and T[0, 1, 0] == 3
    rng = np.random.default_rng(0)
    U = rng.standard_normal((3, 4, 2))
    save_tensor(tmp_path / "u.txt", U)
    np.testing.assert_array_equal(load_tensor(tmp_path / "u.txt"), U)
    save_tensor(tmp_path / "u.dten", U)
    np.testing.assert_array_equal(load_tensor(tmp_path / "u.dten"), U)
    (tmp_path / "bad.txt").write_text("2 2 2\n1 2 3\n")
    with pytest.raises(ValueError):
        read_text_tensor(tmp_path / "bad.txt")


def test_cpd_json_roundtrip(tmp_path, rng):
    p = random_point(rng, (3, 4, 5), 2)
    save_cpd(tmp_path / "p.json", p)
    data = json.loads((tmp_path / "p.json").read_text())
    assert data["shape"] == [3, 4, 5] and data["r"] == 2
    assert len(data["factors"]) == 3 and len(data["factors"][1]) == 2 and len(data["factors"][1][0]) == 4
    np.testing.assert_allclose(evaluate(load_cpd(tmp_path / "p.json")), evaluate(p), atol=1e-13)


def test_tucker_roundtrip(tmp_path, rng):
    tk = st_hosvd(rng.standard_normal((4, 5, 6)), (2, 3, 2))
    side = save_tucker(tmp_path / "core.dten", tk)
    assert side.name == "core.factors.json"
    back = load_tucker(tmp_path / "core.dten")
    np.testing.assert_allclose(back.expand(), tk.expand(), atol=1e-14)


@pytest.fixture
def rank2_file(tmp_path):
    rng = np.random.default_rng(0)
    T = evaluate(random_point(rng, (6, 5, 4), 2))
    path = tmp_path / "t.dten"
    write_dten(path, T)
    return path, T


def test_cli_decompose_and_condition(tmp_path, rank2_file, capsys):
    path, T = rank2_file
    out, trace = tmp_path / "cpd.json", tmp_path / "trace.csv"
    assert main(["decompose", "--tensor", str(path), "--rank", "2", "--seed", "1",
                 "--trace", str(trace), "--out", str(out)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["status"].startswith("converged")
    assert trace.read_text().splitlines()[0] == "k,f,delta,rho,accepted,restart"
    np.testing.assert_allclose(evaluate(load_cpd(out)), T, atol=1e-8)
    assert main(["condition", str(out)]) == 0
    cond = json.loads(capsys.readouterr().out)
    assert cond["kappa"] == pytest.approx(1 / cond["sigma_n"])


def test_cli_compress_then_decompose(tmp_path, rank2_file, capsys):
    path, T = rank2_file
    core = tmp_path / "core.dten"
    assert main(["compress", "--tensor", str(path), "--ranks", "3", "--out", str(core)]) == 0
    assert json.loads(capsys.readouterr().out)["relative_error"] < 1e-12
    out = tmp_path / "lifted.json"
    assert main(["decompose", "--tensor", str(core), "--tucker", "--rank", "2", "--variant", "reg",
                 "--out", str(out)]) == 0
    np.testing.assert_allclose(evaluate(load_cpd(out)), T, atol=1e-8)


def test_cli_benchmark(tmp_path, capsys):
    out = tmp_path / "table.json"
    assert main(["benchmark", "--model", "f", "--c", "0.25", "--s", "1", "--rank", "2", "--e", "5",
                 "--starts", "2", "--solvers", "hr,reg", "--shape", "4,4,4", "--seed", "1",
                 "--out", str(out), "--traces", str(tmp_path / "traces")]) == 0
    data = json.loads(out.read_text())
    assert data["spec"]["shape"] == [4, 4, 4] and not data["spec"]["reference_shape"]
    assert out.with_suffix(".csv").exists()
    assert len(list((tmp_path / "traces").glob("*.csv"))) == 4


def test_cli_reports_errors(rank2_file, capsys):
    path, _ = rank2_file
    assert main(["decompose", "--tensor", str(path), "--rank", "50"]) == 2
    assert "subgeneric" in capsys.readouterr().err


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "rgnhr", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "decompose" in out.stdout
