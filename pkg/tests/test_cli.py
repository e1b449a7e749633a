import json
import subprocess
import sys

import numpy as np
import pytest

from amdtest.cli import EXIT_DATA, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main, read_matrix
from amdtest.errors import InputError
from amdtest.synthetics import MixtureSpec, mean_shift_pair, sample

RESULT_FIELDS = {"version", "mode", "kernel", "F", "statistic", "tau", "alpha", "bootstraps", "p_value",
                 "reject", "tie_broken", "seed", "timings", "config"}


@pytest.fixture
def samples(tmp_path):
    """Anchor equal in law to Q (nu = 0) with separated candidates; 200 rows each."""
    P, Q = mean_shift_pair(2, 1.0)
    r = np.random.default_rng(3)
    paths = {}
    for name, spec in (("z", MixtureSpec(P, Q, 0.0)), ("x", P), ("y", Q)):
        path = tmp_path / f"{name}.csv"
        np.savetxt(path, sample(spec, 200, r), delimiter=",")
        paths[name] = str(path)
    return paths


def run_test(samples, tmp_path, *extra, out="r.json"):
    out_path = tmp_path / out
    code = main(["test", "--anchor", samples["z"], "--p", samples["x"], "--q", samples["y"],
                 "--out", str(out_path), *extra])
    doc = json.loads(out_path.read_text()) if code == EXIT_OK else None
    return code, doc, out_path


def test_result_document(samples, tmp_path):
    code, doc, _ = run_test(samples, tmp_path, "--seed", "7")
    assert code == EXIT_OK
    assert RESULT_FIELDS <= set(doc)
    assert doc["F"] == -1 and doc["reject"] is True
    assert doc["kernel"]["family"] == "gaussian" and doc["kernel"]["bandwidth"] > 0
    assert doc["timings"] is None
    cfg = doc["config"]
    assert cfg["phase1"]["epochs"] == 200 and cfg["phase1"]["learning_rate"] == 0.05
    assert cfg["test"] == {"alpha": 0.05, "bootstraps": 500, "seed": 7}
    assert cfg["train_rows"] == cfg["test_rows"] == 100


def test_byte_identical_reruns(samples, tmp_path):
    _, _, a = run_test(samples, tmp_path, "--seed", "7", out="a.json")
    _, _, b = run_test(samples, tmp_path, "--seed", "7", out="b.json")
    assert a.read_bytes() == b.read_bytes()


def test_identical_candidates(samples, tmp_path):
    out = tmp_path / "same.json"
    code = main(["test", "--anchor", samples["z"], "--p", samples["x"], "--q", samples["x"],
                 "--out", str(out), "--epochs", "5"])
    doc = json.loads(out.read_text())
    assert code == EXIT_OK
    assert doc["reject"] is False and doc["p_value"] == 1.0 and doc["statistic"] == 0.0


@pytest.mark.parametrize("mode", ["amd-b", "amd-na", "amd-sq", "oriented-p", "oriented-q"])
def test_modes(samples, tmp_path, mode):
    code, doc, _ = run_test(samples, tmp_path, "--mode", mode, "--epochs", "20", "--bootstraps", "100")
    assert code == EXIT_OK
    assert doc["mode"] == mode
    if mode == "oriented-p":
        assert doc["F"] == 1 and doc["reject"] is False
    if mode == "oriented-q":
        assert doc["F"] == -1


def test_deep_kernel_and_timings(samples, tmp_path):
    code, doc, _ = run_test(samples, tmp_path, "--kernel", "deep", "--epochs", "5", "--bootstraps", "50",
                            "--timings")
    assert code == EXIT_OK
    assert doc["kernel"]["family"] == "deep"
    assert doc["kernel"]["network_dims"] == [2, 32, 32]
    assert 0 < doc["kernel"]["eps"] < 1
    assert set(doc["timings"]) == {"phase1", "phase2"}


def test_explicit_splits(samples, tmp_path):
    mats = {k: np.loadtxt(v, delimiter=",") for k, v in samples.items()}
    args = ["test", "--epochs", "10", "--bootstraps", "50", "--out", str(tmp_path / "s.json")]
    for phase, rows in (("train", slice(0, 60)), ("test", slice(60, 200))):
        for flag, key in (("anchor", "z"), ("p", "x"), ("q", "y")):
            path = tmp_path / f"{phase}_{key}.csv"
            np.savetxt(path, mats[key][rows], delimiter=",")
            args += [f"--{phase}-{flag}", str(path)]
    assert main(args) == EXIT_OK
    doc = json.loads((tmp_path / "s.json").read_text())
    assert (doc["config"]["train_rows"], doc["config"]["test_rows"]) == (60, 140)


def test_header_detection(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text("a,b\n1,2\n3,4\n")
    np.testing.assert_array_equal(read_matrix(str(p)), [[1, 2], [3, 4]])
    p.write_text("1,2\n3,4\n")
    assert read_matrix(str(p)).shape == (2, 2)


@pytest.mark.parametrize("content", ["1,2\n3\n", "1,2\n3,x\n", "a,b\n", "1,nan\n2,3\n"])
def test_bad_matrix(tmp_path, content):
    p = tmp_path / "bad.csv"
    p.write_text(content)
    with pytest.raises(InputError):
        read_matrix(str(p))


def test_usage_errors(samples, tmp_path, capsys):
    assert main(["test", "--anchor", samples["z"], "--p", samples["x"], "--q", samples["y"], "--bogus"]) == EXIT_USAGE
    assert main([]) == EXIT_USAGE
    assert main(["test", "--anchor", samples["z"]]) == EXIT_USAGE
    assert main(["test", "--anchor", samples["z"], "--p", samples["x"], "--q", samples["y"],
                 "--alpha", "1.5"]) == EXIT_USAGE
    assert main(["test", "--anchor", samples["z"], "--p", samples["x"], "--q", samples["y"],
                 "--train-frac", "1.0"]) == EXIT_USAGE
    assert main(["bench", "beta", "--nu", "0.5"]) == EXIT_USAGE
    assert main(["bench", "power", "--nu", "0.2,1.5"]) == EXIT_USAGE
    assert main(["bench", "power", "--methods", "AMD,XYZ"]) == EXIT_USAGE
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 8


def test_data_errors(samples, tmp_path, capsys):
    missing = str(tmp_path / "missing.csv")
    assert main(["test", "--anchor", missing, "--p", samples["x"], "--q", samples["y"]]) == EXIT_DATA
    wide = tmp_path / "wide.csv"
    np.savetxt(wide, np.zeros((200, 3)), delimiter=",")
    assert main(["test", "--anchor", samples["z"], "--p", str(wide), "--q", samples["y"]]) == EXIT_DATA
    short = tmp_path / "short.csv"
    np.savetxt(short, np.arange(14.0).reshape(7, 2), delimiter=",")
    assert main(["test", "--anchor", str(short), "--p", str(short), "--q", str(short)]) == EXIT_DATA
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 3 and all(line.startswith("data error") for line in err)


def test_numeric_failure(samples, tmp_path):
    code, _, _ = run_test(samples, tmp_path, "--lr", "1e308", "--epochs", "3")
    assert code == EXIT_NUMERIC


def test_bench_type1(tmp_path):
    out = tmp_path / "t1.csv"
    code = main(["bench", "type1", "--reps", "6", "--m", "30", "--epochs", "10", "--bootstraps", "50",
                 "--seed", "1", "--out", str(out)])
    assert code == EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[0] == "method,rejection_rate,stderr,mean_p_value,trials,failures"
    assert [ln.split(",")[0] for ln in lines[1:]] == ["AMD", "AMD-B", "MMD-H:+", "MMD-H:-"]


def test_bench_workers_identical_bytes(tmp_path):
    common = ["bench", "power", "--reps", "3", "--m", "25", "--epochs", "10", "--bootstraps", "40",
              "--nu", "0,0.5", "--seed", "2"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(common + ["--workers", "1", "--out", str(a)]) == EXIT_OK
    assert main(common + ["--workers", "3", "--out", str(b)]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()


def test_bench_beta_and_lambda(tmp_path):
    out = tmp_path / "b.csv"
    assert main(["bench", "beta", "--reps", "2", "--m-grid", "10,20", "--epochs", "5",
                 "--out", str(out)]) == EXIT_OK
    assert out.read_text().splitlines()[0] == "m,beta,stderr,trials,failures"
    assert main(["bench", "lambda", "--reps", "2", "--m", "20", "--epochs", "5", "--bootstraps", "30",
                 "--lambda-grid", "0,1", "--out", str(out)]) == EXIT_OK
    assert len(out.read_text().splitlines()) == 3


def test_console_entry_point(samples, tmp_path):
    out = tmp_path / "sub.json"
    proc = subprocess.run([sys.executable, "-m", "amdtest.cli", "test", "--anchor", samples["z"],
                           "--p", samples["x"], "--q", samples["y"], "--epochs", "5",
                           "--bootstraps", "50", "--out", str(out)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert json.loads(out.read_text())["mode"] == "amd"
    proc = subprocess.run([sys.executable, "-m", "amdtest.cli", "test", "--nope"], capture_output=True, text=True)
    assert proc.returncode == 1
    assert proc.stderr.count("\n") == 1
