"""Command-line tests: config resolution, exit codes, artifact determinism,
and manifest-driven byte-identical reruns.
"""

import json
import subprocess
import sys

import numpy as np

from preflab.cli import main
from preflab.corpus import load_dataset
from preflab.policy import load_checkpoint

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def _gen(path, n=48, vocab=8, seed=1, mode="gap", extra=()):
    argv = [
        "gen-data",
        "--out", str(path),
        "--mode", mode,
        "--n", str(n),
        "--vocab", str(vocab),
        "--seed", str(seed),
        "--max-prompt-len", "2",
        "--max-resp-len", "4",
        *extra,
    ]
    assert main(argv) == 0
    return path


def _train_argv(data, out, steps=6, extra=()):
    return [
        "train",
        "--dataset", str(data),
        "--out", str(out),
        "--steps", str(steps),
        "--batch", "12",
        "--lr", "0.2",
        "--seed", "3",
        *extra,
    ]


# ---- gen-data ----

def test_gen_data_is_deterministic(tmp_path):
    a = _gen(tmp_path / "a.jsonl", seed=7)
    b = _gen(tmp_path / "b.jsonl", seed=7)
    assert a.read_bytes() == b.read_bytes()
    c = _gen(tmp_path / "c.jsonl", seed=8)
    assert a.read_bytes() != c.read_bytes()


def test_gen_data_manifest_records_artifact_hash(tmp_path):
    import hashlib

    out = _gen(tmp_path / "d.jsonl")
    manifest = json.loads((tmp_path / "d.jsonl.manifest.json").read_text())
    assert manifest["command"] == "gen-data"
    assert manifest["artifacts"]["d.jsonl"] == hashlib.sha256(out.read_bytes()).hexdigest()


def test_gen_data_gap_band(tmp_path):
    out = _gen(tmp_path / "band.jsonl", n=30, extra=("--gap-lo", "5", "--gap-hi", "30"))
    gaps = [abs(t.gap) for t in load_dataset(out)]
    assert all(5.0 <= g < 30.0 for g in gaps)


def test_gen_data_modes(tmp_path):
    mixed = load_dataset(_gen(tmp_path / "m.jsonl", n=9, mode="mixed"))
    assert len(mixed) == 9
    pop = load_dataset(
        _gen(tmp_path / "p.jsonl", n=9, mode="popularity", extra=("--tilt", "3.0"))
    )
    # popularity pairs share a single response length
    assert all(len(t.y_w.tokens) == len(t.y_l.tokens) for t in pop)


def test_gen_data_rerun_from_manifest(tmp_path):
    first = _gen(tmp_path / "orig.jsonl", seed=11)
    argv = [
        "gen-data",
        "--config", str(tmp_path / "orig.jsonl.manifest.json"),
        "--out", str(tmp_path / "again.jsonl"),
    ]
    assert main(argv) == 0
    assert (tmp_path / "again.jsonl").read_bytes() == first.read_bytes()


# ---- exit codes ----

def test_missing_dataset_is_config_error(tmp_path, capsys):
    assert main(["train", "--out", str(tmp_path / "r")]) == 2
    assert "--dataset" in capsys.readouterr().err


def test_bad_n_is_config_error(tmp_path):
    assert main(["gen-data", "--out", str(tmp_path / "x.jsonl"), "--n", "0"]) == 2


def test_unknown_config_key_is_config_error(tmp_path, capsys):
    cfgfile = tmp_path / "cfg.json"
    cfgfile.write_text('{"stepz": 3}')
    data = _gen(tmp_path / "d.jsonl")
    code = main(
        ["train", "--config", str(cfgfile), "--dataset", str(data),
         "--out", str(tmp_path / "r")]
    )
    assert code == 2
    assert "stepz" in capsys.readouterr().err


def test_malformed_dataset_is_data_error(tmp_path, capsys):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"x": [2], "yw": [3, 1]}\n')
    assert main(["train", "--dataset", str(bad), "--out", str(tmp_path / "r")]) == 2
    assert "yl" in capsys.readouterr().err


def test_numerical_abort_exit_code(tmp_path, capsys):
    data = _gen(tmp_path / "d.jsonl")
    with np.errstate(all="ignore"):
        code = main(_train_argv(data, tmp_path / "r", extra=("--lr", "inf", "--no-plots")))
    assert code == 3
    assert "numerical abort" in capsys.readouterr().err


# ---- train ----

def test_train_writes_artifacts_and_manifest(tmp_path):
    data = _gen(tmp_path / "d.jsonl")
    out = tmp_path / "run"
    argv = _train_argv(data, out, extra=("--no-plots", "--dump-diagnostics"))
    assert main(argv) == 0
    for name in ("checkpoint.json", "history.csv", "diagnostics.csv", "manifest.json"):
        assert (out / name).exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "train"
    assert set(manifest["artifacts"]) == {
        "checkpoint.json", "history.csv", "diagnostics.csv"
    }
    header, *rows = (out / "history.csv").read_text().splitlines()
    assert header.startswith("step,")
    assert len(rows) == 6


def test_train_renders_plot(tmp_path):
    data = _gen(tmp_path / "d.jsonl")
    out = tmp_path / "run"
    assert main(_train_argv(data, out, steps=3)) == 0
    png = (out / "history.png").read_bytes()
    assert png.startswith(PNG_MAGIC)


def test_train_rerun_from_manifest_is_byte_identical(tmp_path):
    data = _gen(tmp_path / "d.jsonl")
    first = tmp_path / "run1"
    argv = _train_argv(data, first, extra=("--dump-diagnostics",))
    assert main(argv) == 0
    second = tmp_path / "run2"
    assert main(
        ["train", "--config", str(first / "manifest.json"), "--out", str(second)]
    ) == 0
    for name in ("checkpoint.json", "history.csv", "diagnostics.csv", "history.png"):
        assert (second / name).read_bytes() == (first / name).read_bytes()
    m1 = json.loads((first / "manifest.json").read_text())
    m2 = json.loads((second / "manifest.json").read_text())
    assert m1["artifacts"] == m2["artifacts"]


def test_train_zero_steps_keeps_init(tmp_path):
    data = _gen(tmp_path / "d.jsonl")
    out = tmp_path / "run"
    assert main(_train_argv(data, out, steps=0, extra=("--no-plots",))) == 0
    policy = load_checkpoint(out / "checkpoint.json")
    assert not np.any(policy.logits)


def test_config_file_merge_precedence(tmp_path):
    data = _gen(tmp_path / "d.jsonl")
    cfgfile = tmp_path / "cfg.json"
    cfgfile.write_text('{"steps": 3, "loss": {"beta": 7.0}}')
    out = tmp_path / "run"
    argv = [
        "train",
        "--config", str(cfgfile),
        "--dataset", str(data),
        "--out", str(out),
        "--steps", "5",
        "--no-plots",
    ]
    assert main(argv) == 0
    cfg = json.loads((out / "manifest.json").read_text())["config"]
    assert cfg["steps"] == 5  # explicit flag beats config file
    assert cfg["loss"]["beta"] == 7.0  # config file beats default
    assert cfg["loss"]["method"] == "rmipo"  # untouched default


def test_cli_simpo_matches_rmipo_schedule_none(tmp_path):
    data = _gen(tmp_path / "d.jsonl")
    out_a = tmp_path / "simpo"
    out_b = tmp_path / "rmipo"
    base = ("--beta", "2.0", "--gamma", "1.0", "--no-plots")
    assert main(
        _train_argv(data, out_a, extra=("--method", "simpo", *base))
    ) == 0
    assert main(
        _train_argv(
            data, out_b,
            extra=("--method", "rmipo", "--schedule", "none", *base),
        )
    ) == 0
    assert (out_a / "checkpoint.json").read_bytes() == (
        out_b / "checkpoint.json"
    ).read_bytes()


# ---- sweep ----

def _sweep_argv(data, out, workers):
    return [
        "sweep",
        "--dataset", str(data),
        "--out", str(out),
        "--methods", "simpo,dpo",
        "--betas", "1.0,2.0",
        "--gammas", "0.5",
        "--steps", "5",
        "--batch", "12",
        "--lr", "0.2",
        "--seed", "3",
        "--workers", str(workers),
        "--no-plots",
    ]


def test_sweep_workers_do_not_change_output(tmp_path):
    data = _gen(tmp_path / "d.jsonl")
    assert main(_sweep_argv(data, tmp_path / "s1", workers=1)) == 0
    assert main(_sweep_argv(data, tmp_path / "s2", workers=2)) == 0
    csv1 = (tmp_path / "s1" / "sweep.csv").read_bytes()
    csv2 = (tmp_path / "s2" / "sweep.csv").read_bytes()
    assert csv1 == csv2
    header, *rows = csv1.decode().splitlines()
    assert header.startswith("method,beta,gamma")
    assert len(rows) == 4


def test_sweep_rerun_from_manifest_is_byte_identical(tmp_path):
    data = _gen(tmp_path / "d.jsonl")
    first = tmp_path / "s1"
    assert main(_sweep_argv(data, first, workers=1)) == 0
    second = tmp_path / "s2"
    assert main(
        ["sweep", "--config", str(first / "manifest.json"), "--out", str(second)]
    ) == 0
    assert (second / "sweep.csv").read_bytes() == (first / "sweep.csv").read_bytes()


def test_sweep_rejects_unknown_method(tmp_path, capsys):
    data = _gen(tmp_path / "d.jsonl")
    argv = _sweep_argv(data, tmp_path / "s", workers=1)
    argv[argv.index("simpo,dpo")] = "simpo,nope"
    assert main(argv) == 2
    assert "nope" in capsys.readouterr().err


# ---- diagnose ----

def test_grad_check_cli(tmp_path, capsys):
    out = tmp_path / "diag"
    argv = [
        "diagnose", "grad-check",
        "--out", str(out),
        "--methods", "rmipo,dpo,beta-dpo",
        "--instances", "2",
        "--seed", "5",
    ]
    assert main(argv) == 0
    assert "PASS" in capsys.readouterr().out
    header, *rows = (out / "grad_check.csv").read_text().splitlines()
    assert header == "method,instance,max_rel_err"
    assert len(rows) == 6
    assert all(float(r.split(",")[2]) < 1e-6 for r in rows)


def test_diag_dists_and_gamma_hist(tmp_path):
    data = _gen(tmp_path / "d.jsonl")
    out = tmp_path / "diag"
    assert main(
        ["diagnose", "dists", "--dataset", str(data), "--out", str(out), "--no-plots"]
    ) == 0
    assert (out / "dists_conditional.csv").exists()
    assert (out / "dists_pmi.csv").exists()
    assert main(
        ["diagnose", "gamma-hist", "--dataset", str(data), "--out", str(out),
         "--bins", "16", "--no-plots"]
    ) == 0
    header, *rows = (out / "gamma_hist.csv").read_text().splitlines()
    assert len(rows) == 16


def test_diag_density_csv(tmp_path):
    data = _gen(tmp_path / "d.jsonl", n=20)
    out = tmp_path / "diag"
    assert main(
        ["diagnose", "density", "--dataset", str(data), "--out", str(out),
         "--jitter", "0.25", "--seed", "9", "--no-plots"]
    ) == 0
    header, *rows = (out / "density.csv").read_text().splitlines()
    assert header == "sample,value"
    assert len(rows) == 20
    assert all(abs(float(r.split(",")[1])) <= 1.25 for r in rows)


def test_diag_dominance_runs(tmp_path):
    data = _gen(tmp_path / "d.jsonl", n=24)
    out = tmp_path / "diag"
    argv = [
        "diagnose", "dominance",
        "--dataset", str(data),
        "--out", str(out),
        "--betas", "1.0,2.0",
        "--gammas", "0.3,1.6",
        "--steps", "10",
        "--batch", "8",
        "--seed", "2",
        "--no-plots",
    ]
    assert main(argv) == 0
    header, *rows = (out / "dominance.csv").read_text().splitlines()
    assert header == "beta,gamma,win_rate,final_loss,mean_weight"
    assert len(rows) == 4


def test_diag_plots_rendered(tmp_path):
    data = _gen(tmp_path / "d.jsonl", n=20)
    out = tmp_path / "diag"
    assert main(
        ["diagnose", "dists", "--dataset", str(data), "--out", str(out)]
    ) == 0
    for name in ("dists_conditional.png", "dists_pmi.png"):
        assert (out / name).read_bytes().startswith(PNG_MAGIC)


# ---- module entry point ----

def test_module_entrypoint_help():
    proc = subprocess.run(
        [sys.executable, "-m", "preflab", "--help"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    for word in ("gen-data", "train", "sweep", "diagnose"):
        assert word in proc.stdout
