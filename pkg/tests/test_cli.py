import json
import shutil
import subprocess

import numpy as np
import pytest

from stitchgen.cli import run
from stitchgen.config import ConfigError, RunConfig, parse_config_text, resolve
from stitchgen.dataset import load_csv
from stitchgen.denoiser import load_checkpoint
from stitchgen.metrics import evaluate, read_kv


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert run(["make-data", "--out", str(d / "data.csv")]) == 0
    (d / "run.cfg").write_text(
        f"# small run\ndata = {d / 'data.csv'}\ntest_root = C\nT = 20\nepochs = 3\n"
        f"out = {d / 'train'}\ncheckpoint = {d / 'train' / 'checkpoint.json'}\n")
    assert run(["train", "--config", str(d / "run.cfg")]) == 0
    return d


def _gen(workdir, out, *extra):
    return run(["generate", "--config", str(workdir / "run.cfg"), "--out", str(workdir / out), *extra])


# -- config ---------------------------------------------------------------------

def test_precedence(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("eta = 0.5\nstride = 4  # comment\nsymmetric-stitch = yes\n")
    cfg = resolve(str(p), {"stride": "2", "mode": None})
    assert (cfg.eta, cfg.stride, cfg.symmetric_stitch, cfg.mode) == (0.5, 2, True, "parallel")
    assert resolve().window == RunConfig().window == 32


def test_config_errors():
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config_text("wibble = 3")
    with pytest.raises(ConfigError, match="expected"):
        parse_config_text("just words")
    with pytest.raises(ConfigError, match="stride"):
        parse_config_text("stride = fast")


def test_config_echo_round_trips():
    cfg = RunConfig(eta=0.25, condition="(C, *, 15)")
    assert resolve(None, parse_config_text(cfg.to_text())) == cfg


# -- commands ---------------------------------------------------------------------

def test_make_data(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run(["make-data", "--out", str(a), "--seed", "4"]) == 0
    assert run(["make-data", "--out", str(b), "--seed", "4"]) == 0
    assert a.read_bytes() == b.read_bytes()
    d = load_csv(a, ["Entity", "Month", "Day"], ["ch0", "ch1"])
    assert (d.M, d.L) == (1080, 3)
    assert run(["make-data", "--kind", "ar1-hierarchy", "--length", "50", "--channels", "1",
                "--out", str(tmp_path / "c.csv")]) == 0


def test_train_outputs(workdir):
    out = workdir / "train"
    trace = (out / "loss_trace.csv").read_text().splitlines()
    assert trace[0] == "epoch,loss" and len(trace) == 4
    assert "epochs = 3" in (out / "config.txt").read_text()
    ck = load_checkpoint(out / "checkpoint.json")
    assert ck.schedule.T == 20 and ck.extra["test_root"] == "C"


def test_train_zero_epochs(workdir, tmp_path):
    assert run(["train", "--config", str(workdir / "run.cfg"), "--epochs", "0", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "checkpoint.json").exists()


def test_generate_outputs_and_determinism(workdir):
    assert _gen(workdir, "g1", "--condition", "(C, *, 15)") == 0
    assert _gen(workdir, "g2", "--condition", "(C, *, 15)", "--workers", "4") == 0
    for name in ("generated.csv", "truth.csv", "trace.csv"):
        assert (workdir / "g1" / name).read_bytes() == (workdir / "g2" / name).read_bytes()
    s1 = json.loads((workdir / "g1" / "summary.json").read_text())
    s2 = json.loads((workdir / "g2" / "summary.json").read_text())
    s1.pop("seconds"), s2.pop("seconds")
    assert s1 == s2 and s1["calls"] == 20 and s1["masked_rows"] == 12
    lines = (workdir / "g1" / "generated.csv").read_text().splitlines()
    assert lines[0] == "timestep,mask,ch0,ch1" and len(lines) == 361
    assert "\r" not in (workdir / "g1" / "generated.csv").read_text()
    assert (workdir / "g1" / "trace.csv").read_text().startswith("t,self_loss,stitch_loss,overlap_discrepancy\n")


def test_generate_all_wildcards_generates_everything(workdir):
    assert _gen(workdir, "gall", "--condition", "(*, *, *)", "--mode", "metadata_only") == 0
    body = np.loadtxt(workdir / "gall" / "generated.csv", delimiter=",", skiprows=1)
    assert body[:, 1].sum() == 360


@pytest.mark.parametrize("p", ["0.25", "0.5", "0.75"])
def test_generate_missing_fraction(workdir, p):
    assert _gen(workdir, "gp" + p, "--missing-frac", p, "--mode", "repaint") == 0
    body = np.loadtxt(workdir / ("gp" + p) / "generated.csv", delimiter=",", skiprows=1)
    assert body[:, 1].sum() == int(float(p) * 360 + 0.5)


def test_generate_unknown_category_is_config_error(workdir, capsys):
    assert _gen(workdir, "bad", "--condition", "(Z, *, *)") == 1
    assert "selects no test rows" in capsys.readouterr().err


def test_generate_flag_errors(workdir):
    assert _gen(workdir, "bad", "--stitch-metric", "l7") == 1
    assert _gen(workdir, "bad", "--stride", "64") == 1
    assert _gen(workdir, "bad", "--condition", "(C,*)") == 1
    assert _gen(workdir, "bad", "--condition", "(C,*,1)", "--missing-frac", "0.5") == 1
    assert _gen(workdir, "bad", "--checkpoint", str(workdir / "missing.json")) == 3
    assert run(["generate", "--nonsense"]) == 1


def test_evaluate_matches_in_process(workdir):
    assert _gen(workdir, "ge", "--condition", "(C, 3, *)") == 0
    g = workdir / "ge"
    assert run(["evaluate", "--generated", str(g / "generated.csv"), "--truth", str(g / "truth.csv"),
                "--out", str(g), "--max-lag", "40"]) == 0
    got = read_kv(g / "metrics.txt")
    gen = np.loadtxt(g / "generated.csv", delimiter=",", skiprows=1)
    tru = np.loadtxt(g / "truth.csv", delimiter=",", skiprows=1)
    from stitchgen.metrics import MetricConfig
    want = evaluate(gen[:, 2:], tru[:, 2:], gen[:, 1], MetricConfig(max_lag=40))
    for k in ("mse", "acd", "xcorr"):
        assert float(got[k]) == want[k]
    assert "max_lag = 40" in (g / "metrics.txt").read_text()


def test_evaluate_standardised_with_checkpoint(workdir):
    g = workdir / "g1"
    out = workdir / "m_std.txt"
    assert run(["evaluate", "--generated", str(g / "generated.csv"), "--truth", str(g / "truth.csv"),
                "--checkpoint", str(workdir / "train" / "checkpoint.json"), "--metrics-out", str(out)]) == 0
    summary = json.loads((g / "summary.json").read_text())
    assert float(read_kv(out)["mse"]) == pytest.approx(summary["masked_mse"], rel=1e-9)


def test_evaluate_identical_and_univariate(tmp_path):
    rows = "timestep,mask,v\n" + "".join(f"{i},{i % 2},{float(np.sin(i / 3))!r}\n" for i in range(1, 41))
    (tmp_path / "a.csv").write_text(rows)
    assert run(["evaluate", "--generated", str(tmp_path / "a.csv"), "--truth", str(tmp_path / "a.csv"),
                "--out", str(tmp_path)]) == 0
    text = (tmp_path / "metrics.txt").read_text()
    vals = read_kv(tmp_path / "metrics.txt")
    assert float(vals["mse"]) == 0.0 and float(vals["acd"]) == 0.0
    assert "xcorr" not in vals and "xcorr omitted" in text


def test_evaluate_misaligned(tmp_path):
    (tmp_path / "a.csv").write_text("timestep,mask,v\n1,1,0.5\n2,1,0.1\n")
    (tmp_path / "b.csv").write_text("timestep,mask,v\n1,1,0.5\n")
    assert run(["evaluate", "--generated", str(tmp_path / "a.csv"), "--truth", str(tmp_path / "b.csv"),
                "--out", str(tmp_path)]) == 1


def test_bench_single_window(workdir, tmp_path):
    # window = whole test split: J = 1, both modes do identical work
    cfg = workdir / "bench.cfg"
    cfg.write_text((workdir / "run.cfg").read_text() + f"out = {tmp_path}\n")
    assert run(["train", "--config", str(cfg), "--window", "360", "--epochs", "0",
                "--out", str(tmp_path / "w")]) == 0
    assert run(["bench", "--config", str(cfg), "--window", "360", "--stride", "8",
                "--checkpoint", str(tmp_path / "w" / "checkpoint.json"), "--condition", "(C, *, 15)"]) == 0
    rep = read_kv(tmp_path / "bench.txt")
    assert rep["windows"] == "1" and float(rep["call_ratio"]) == 1.0 and rep["ideal_speedup"] == "1"
    assert rep["parallel_calls"] == rep["autoregressive_calls"] == "20"


def test_bench_call_ratio(workdir, tmp_path):
    assert run(["bench", "--config", str(workdir / "run.cfg"), "--condition", "(C, *, 15)",
                "--batch", "16", "--out", str(tmp_path)]) == 0
    rep = read_kv(tmp_path / "bench.txt")
    J = int(rep["windows"])
    assert J == 42
    assert float(rep["call_ratio"]) == J / -(-J // 16)
    assert rep["ideal_speedup"] == "16"


def test_nan_exit_code(workdir, tmp_path):
    assert run(["train", "--config", str(workdir / "run.cfg"), "--lr", "1e8", "--optimizer", "sgd",
                "--out", str(tmp_path)]) == 2


def test_console_script(workdir):
    exe = shutil.which("stitchgen")
    if exe is None:
        pytest.skip("package not installed as a console script")
    res = subprocess.run([exe, "generate", "--config", str(workdir / "run.cfg"), "--condition", "(Q,*,*)"],
                         capture_output=True, text=True)
    assert res.returncode == 1
    assert subprocess.run([exe, "--version"], capture_output=True).returncode == 0
