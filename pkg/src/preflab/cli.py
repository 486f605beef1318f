"""Command-line front end: dataset generation, training, sweeps, diagnostics.

Every command resolves its parameters as defaults < JSON config file <
explicit flags, then echoes the merged result into a manifest written next to
its outputs. --config also accepts a previously written manifest, so any run
can be reproduced byte for byte from its own record.

Exit codes: 0 success, 2 usage or config error, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .corpus import (
    Vocab,
    generate_dataset,
    generate_token_popularity_dataset,
    load_dataset,
    random_oracle,
    save_dataset,
)
from .diagnostics import (
    delta_log_values,
    gamma_dominance_experiment,
    gamma_values,
    grad_check,
    make_histogram,
    random_grad_check_instance,
    reward_density,
    write_dominance_csv,
    write_dominance_weights_csv,
    write_histogram_csv,
)
from .errors import ConfigError, DataFormatError, NumericalAbort
from .objectives import (
    METHODS,
    SCHEDULES,
    LossConfig,
    evaluate_batch,
    write_diagnostics_csv,
)
from .policy import gaussian_policy, load_checkpoint, save_checkpoint, zeros_policy
from .trainer import TrainConfig, evaluate_win_rate, train, write_history_csv

GRAD_CHECK_TOLERANCE = 1e-6

# The mixed corpus pairs an easy half (huge reward gaps, near-noiseless
# labels) with a hard half (near-unit gaps, heavily label-noised).
MIXED_CONFIDENT_BAND = (20.0, float("inf"))
MIXED_AMBIGUOUS_BAND = (0.8, 1.2)
MIXED_AMBIGUOUS_SCALE = 2.0

_LOSS_DEFAULTS = asdict(LossConfig())

_GEN_DEFAULTS = {
    "out": None,
    "mode": "gap",
    "n": 1000,
    "vocab": 16,
    "seed": 0,
    "max_prompt_len": 3,
    "max_resp_len": 6,
    "scale": 20.0,
    "relevance": 0.25,
    "length_penalty": 0.0,
    "gap_lo": None,
    "gap_hi": None,
    "tilt": 4.0,
    "popular_count": None,
}

_TRAIN_BASE = {
    "data": None,
    "out": "run",
    "steps": 500,
    "batch_size": 32,
    "lr": 0.1,
    "optimizer": "sgd",
    "lr_schedule": "constant",
    "seed": 0,
    "init": "zeros",
    "init_stdev": 0.5,
    "init_seed": None,
    "vocab": None,
    "order": 2,
    "plots": True,
}

_TRAIN_DEFAULTS = {**_TRAIN_BASE, "dump_diagnostics": False, "loss": _LOSS_DEFAULTS}

_SWEEP_DEFAULTS = {
    **_TRAIN_BASE,
    "out": "sweep",
    "loss": _LOSS_DEFAULTS,
    "methods": None,
    "betas": None,
    "gammas": None,
    "bounds": None,
    "schedules": None,
    "workers": None,
}

_GRAD_DEFAULTS = {"out": "diag", "seed": 0, "instances": 5, "methods": None}

_DISTS_DEFAULTS = {
    "out": "diag",
    "data": None,
    "checkpoint": None,
    "vocab": None,
    "order": 2,
    "bins": 64,
    "plots": True,
}

_DENSITY_DEFAULTS = {
    "out": "diag",
    "data": None,
    "jitter": 0.5,
    "seed": 0,
    "plots": True,
}

_GAMMA_HIST_DEFAULTS = {
    "out": "diag",
    "data": None,
    "checkpoint": None,
    "vocab": None,
    "order": 2,
    "bins": 64,
    "gamma_min": _LOSS_DEFAULTS["gamma_min"],
    "gamma_max": _LOSS_DEFAULTS["gamma_max"],
    "schedule": _LOSS_DEFAULTS["schedule"],
    "schedule_scale": _LOSS_DEFAULTS["schedule_scale"],
    "plots": True,
}

_DOMINANCE_DEFAULTS = {
    "out": "diag",
    "data": None,
    "betas": [1.0, 2.0, 4.0],
    "gammas": [0.3, 1.0, 1.6],
    "steps": 300,
    "batch_size": 32,
    "lr": 0.1,
    "seed": 0,
    "vocab": None,
    "order": 2,
    "plots": True,
}


# ---- config plumbing ----

def _load_config_doc(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    if "command" in doc and "config" in doc:
        doc = doc["config"]
        if not isinstance(doc, dict):
            raise ConfigError(f"manifest {path} has a malformed config block")
    return doc


def _resolve(defaults: dict, args) -> dict:
    """Merged parameters: defaults, then config file, then explicit flags."""
    cfg = json.loads(json.dumps(defaults))
    doc = _load_config_doc(args.config) if getattr(args, "config", None) else {}
    for key, value in doc.items():
        if key not in cfg:
            raise ConfigError(f"unknown config key {key!r}")
        if key == "loss":
            if not isinstance(value, dict):
                raise ConfigError("config key 'loss' must be an object")
            for lk, lv in value.items():
                if lk not in cfg["loss"]:
                    raise ConfigError(f"unknown loss config key {lk!r}")
                cfg["loss"][lk] = lv
        else:
            cfg[key] = value
    flag_keys = [k for k in cfg if k != "loss"] + list(cfg.get("loss", ()))
    for key in flag_keys:
        value = getattr(args, key, None)
        if value is None:
            continue
        if key in cfg and key != "loss":
            cfg[key] = value
        else:
            cfg["loss"][key] = value
    if getattr(args, "no_plots", False):
        cfg["plots"] = False
    return cfg


def _train_config_from(cfg: dict) -> TrainConfig:
    return TrainConfig(
        loss=LossConfig(**cfg["loss"]),
        steps=int(cfg["steps"]),
        batch_size=int(cfg["batch_size"]),
        lr=float(cfg["lr"]),
        optimizer=cfg["optimizer"],
        lr_schedule=cfg["lr_schedule"],
        seed=int(cfg["seed"]),
    )


def _load_data(cfg: dict):
    if not cfg.get("data"):
        raise ConfigError("no dataset path given (use --dataset or the config file)")
    try:
        return load_dataset(cfg["data"])
    except FileNotFoundError:
        raise ConfigError(f"dataset not found: {cfg['data']}") from None


def _vocab_size(cfg: dict, dataset) -> int:
    if cfg.get("vocab"):
        return int(cfg["vocab"])
    top = 0
    for t in dataset:
        top = max(top, max(t.x.tokens, default=0), max(t.y_w.tokens), max(t.y_l.tokens))
    return max(top + 1, 4)


def _build_policy(cfg: dict, vocab_size: int):
    if cfg["init"] == "zeros":
        return zeros_policy(vocab_size, int(cfg["order"]))
    if cfg["init"] == "gaussian":
        seed = cfg["init_seed"] if cfg["init_seed"] is not None else cfg["seed"]
        return gaussian_policy(
            vocab_size, int(cfg["order"]), float(cfg["init_stdev"]), int(seed)
        )
    raise ConfigError(f"unknown init kind {cfg['init']!r}")


def _policy_for_diag(cfg: dict, dataset):
    """Checkpoint if given, else the untrained uniform table."""
    if cfg.get("checkpoint"):
        return load_checkpoint(cfg["checkpoint"])
    return zeros_policy(_vocab_size(cfg, dataset), int(cfg["order"]))


# ---- manifests ----

def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(
    manifest_path, command: str, cfg: dict, dataset_path, outdir, files: dict, started
) -> None:
    manifest = {
        "command": command,
        "config": cfg,
        "seed": cfg.get("seed"),
        "dataset": dataset_path,
        "outdir": str(outdir),
        "artifacts": {name: _sha256(path) for name, path in sorted(files.items())},
        "duration_seconds": round(time.monotonic() - started, 3),
    }
    manifest_path = Path(manifest_path)
    tmp = manifest_path.with_name(manifest_path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    os.replace(tmp, manifest_path)


def _outdir(cfg: dict) -> Path:
    outdir = Path(cfg["out"])
    outdir.mkdir(parents=True, exist_ok=True)
    return outdir


# ---- gen-data ----

def _generate(cfg: dict, vocab: Vocab):
    n = int(cfg["n"])
    mode = cfg["mode"]
    if mode == "gap":
        rng = np.random.default_rng(int(cfg["seed"]))
        oracle = random_oracle(
            vocab,
            rng,
            scale=float(cfg["scale"]),
            relevance=float(cfg["relevance"]),
            length_penalty=float(cfg["length_penalty"]),
        )
        gap_range = None
        if cfg["gap_lo"] is not None or cfg["gap_hi"] is not None:
            lo = float(cfg["gap_lo"]) if cfg["gap_lo"] is not None else 0.0
            hi = float(cfg["gap_hi"]) if cfg["gap_hi"] is not None else float("inf")
            gap_range = (lo, hi)
        return generate_dataset(
            oracle,
            vocab,
            n,
            int(cfg["max_prompt_len"]),
            int(cfg["max_resp_len"]),
            rng,
            gap_range=gap_range,
        )
    if mode == "mixed":
        n_confident = n // 2
        n_ambiguous = n - n_confident
        if n_confident < 1:
            raise ConfigError(f"mixed mode needs n >= 2, got {n}")
        streams = np.random.SeedSequence(int(cfg["seed"])).spawn(2)
        rng_c = np.random.default_rng(streams[0])
        rng_a = np.random.default_rng(streams[1])
        confident = generate_dataset(
            random_oracle(
                vocab,
                rng_c,
                scale=float(cfg["scale"]),
                relevance=float(cfg["relevance"]),
                length_penalty=float(cfg["length_penalty"]),
            ),
            vocab,
            n_confident,
            int(cfg["max_prompt_len"]),
            int(cfg["max_resp_len"]),
            rng_c,
            gap_range=MIXED_CONFIDENT_BAND,
        )
        ambiguous = generate_dataset(
            random_oracle(
                vocab,
                rng_a,
                scale=MIXED_AMBIGUOUS_SCALE,
                relevance=float(cfg["relevance"]),
                length_penalty=float(cfg["length_penalty"]),
            ),
            vocab,
            n_ambiguous,
            int(cfg["max_prompt_len"]),
            int(cfg["max_resp_len"]),
            rng_a,
            gap_range=MIXED_AMBIGUOUS_BAND,
        )
        return confident + ambiguous
    if mode == "popularity":
        rng = np.random.default_rng(int(cfg["seed"]))
        content = list(vocab.content)
        count = cfg["popular_count"]
        count = int(count) if count is not None else max(1, len(content) // 4)
        if not 1 <= count <= len(content):
            raise ConfigError(f"popular_count must be in [1, {len(content)}]")
        return generate_token_popularity_dataset(
            vocab,
            n,
            frozenset(content[:count]),
            float(cfg["tilt"]),
            int(cfg["max_prompt_len"]),
            int(cfg["max_resp_len"]),
            rng,
        )
    raise ConfigError(f"unknown gen-data mode {mode!r}")


def cmd_gen_data(args) -> int:
    started = time.monotonic()
    cfg = _resolve(_GEN_DEFAULTS, args)
    if not cfg["out"]:
        raise ConfigError("no output path given (use --out or the config file)")
    vocab = Vocab(int(cfg["vocab"]))
    dataset = _generate(cfg, vocab)
    out = Path(cfg["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(dataset, out)
    mean_gap = float(np.mean([abs(t.gap) for t in dataset]))
    _write_manifest(
        Path(str(out) + ".manifest.json"),
        "gen-data",
        cfg,
        str(out),
        out.parent,
        {out.name: out},
        started,
    )
    print(
        f"wrote {out}: n={len(dataset)} vocab={vocab.size} "
        f"mean reward gap={mean_gap:.4f}"
    )
    return 0


# ---- train ----

def cmd_train(args) -> int:
    started = time.monotonic()
    cfg = _resolve(_TRAIN_DEFAULTS, args)
    dataset = _load_data(cfg)
    policy0 = _build_policy(cfg, _vocab_size(cfg, dataset))
    tcfg = _train_config_from(cfg)
    result = train(tcfg, dataset, policy0)

    outdir = _outdir(cfg)
    files = {}
    save_checkpoint(result.policy, outdir / "checkpoint.json")
    files["checkpoint.json"] = outdir / "checkpoint.json"
    write_history_csv(outdir / "history.csv", result.history)
    files["history.csv"] = outdir / "history.csv"
    if cfg["plots"]:
        from .plots import save_history_plot

        save_history_plot(result.history, outdir / "history.png")
        files["history.png"] = outdir / "history.png"
    if cfg["dump_diagnostics"]:
        ev = evaluate_batch(
            result.policy, result.ref, dataset, tcfg.loss, want_grad=False
        )
        write_diagnostics_csv(outdir / "diagnostics.csv", [(tcfg.steps, ev.diag)])
        files["diagnostics.csv"] = outdir / "diagnostics.csv"

    win = evaluate_win_rate(result.policy, dataset, tcfg.loss)
    _write_manifest(
        outdir / "manifest.json", "train", cfg, cfg["data"], outdir, files, started
    )
    print(
        f"trained {tcfg.loss.method} for {tcfg.steps} steps: "
        f"final win rate {win:.4f}"
    )
    return 0


# ---- sweep ----

def _sweep_job(payload):
    idx, cfg, point = payload
    job_cfg = json.loads(json.dumps(cfg))
    job_cfg["loss"].update(point)
    dataset = load_dataset(job_cfg["data"])
    policy0 = _build_policy(job_cfg, _vocab_size(job_cfg, dataset))
    tcfg = _train_config_from(job_cfg)
    result = train(tcfg, dataset, policy0)
    ev = evaluate_batch(result.policy, result.ref, dataset, tcfg.loss, want_grad=False)
    row = {
        "method": point["method"],
        "beta": point["beta"],
        "gamma": point["gamma"],
        "gamma_min": point["gamma_min"],
        "gamma_max": point["gamma_max"],
        "schedule": point["schedule"],
        "final_loss": float(ev.loss),
        "win_rate": evaluate_win_rate(result.policy, dataset, tcfg.loss),
        "mean_gamma": float(np.mean(ev.diag.gamma)),
    }
    return idx, row


def _sweep_grid(cfg: dict) -> list[dict]:
    loss = cfg["loss"]
    methods = cfg["methods"] if cfg["methods"] is not None else [loss["method"]]
    betas = cfg["betas"] if cfg["betas"] is not None else [loss["beta"]]
    gammas = cfg["gammas"] if cfg["gammas"] is not None else [loss["gamma"]]
    bounds = (
        cfg["bounds"]
        if cfg["bounds"] is not None
        else [[loss["gamma_min"], loss["gamma_max"]]]
    )
    schedules = (
        cfg["schedules"] if cfg["schedules"] is not None else [loss["schedule"]]
    )
    for name, grid in (
        ("methods", methods),
        ("betas", betas),
        ("gammas", gammas),
        ("bounds", bounds),
        ("schedules", schedules),
    ):
        if not grid:
            raise ConfigError(f"empty sweep grid for {name}")
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"unknown method in sweep grid: {m!r}")
    for s in schedules:
        if s not in SCHEDULES:
            raise ConfigError(f"unknown schedule in sweep grid: {s!r}")
    return [
        {
            "method": m,
            "beta": float(b),
            "gamma": float(g),
            "gamma_min": float(lo),
            "gamma_max": float(hi),
            "schedule": s,
        }
        for m in methods
        for b in betas
        for g in gammas
        for lo, hi in bounds
        for s in schedules
    ]


def _write_sweep_csv(path, rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(
            "method,beta,gamma,gamma_min,gamma_max,schedule,"
            "final_loss,win_rate,mean_gamma\n"
        )
        for r in rows:
            fh.write(
                f"{r['method']},{r['beta']!r},{r['gamma']!r},{r['gamma_min']!r},"
                f"{r['gamma_max']!r},{r['schedule']},{r['final_loss']!r},"
                f"{r['win_rate']!r},{r['mean_gamma']!r}\n"
            )


def cmd_sweep(args) -> int:
    started = time.monotonic()
    cfg = _resolve(_SWEEP_DEFAULTS, args)
    if not cfg.get("data"):
        raise ConfigError("no dataset path given (use --dataset or the config file)")
    if not Path(cfg["data"]).exists():
        raise ConfigError(f"dataset not found: {cfg['data']}")
    points = _sweep_grid(cfg)
    payloads = [(i, cfg, p) for i, p in enumerate(points)]
    workers = cfg["workers"]
    workers = int(workers) if workers else min(len(points), os.cpu_count() or 1)
    if workers <= 1:
        results = [_sweep_job(p) for p in payloads]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_job, payloads))
    rows = [row for _, row in sorted(results, key=lambda pair: pair[0])]

    outdir = _outdir(cfg)
    files = {}
    _write_sweep_csv(outdir / "sweep.csv", rows)
    files["sweep.csv"] = outdir / "sweep.csv"
    if cfg["plots"]:
        from .plots import save_sweep_plot

        save_sweep_plot(rows, outdir / "sweep.png")
        files["sweep.png"] = outdir / "sweep.png"
    _write_manifest(
        outdir / "manifest.json", "sweep", cfg, cfg["data"], outdir, files, started
    )
    best = max(rows, key=lambda r: r["win_rate"])
    print(
        f"swept {len(rows)} grid points: best win rate {best['win_rate']:.4f} "
        f"(method={best['method']} beta={best['beta']} gamma={best['gamma']} "
        f"schedule={best['schedule']})"
    )
    return 0


# ---- diagnose ----

def cmd_diag_grad_check(args) -> int:
    started = time.monotonic()
    cfg = _resolve(_GRAD_DEFAULTS, args)
    if getattr(args, "all_methods", False):
        cfg["methods"] = list(METHODS)
    methods = cfg["methods"] if cfg["methods"] is not None else list(METHODS)
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"unknown method for grad-check: {m!r}")
    instances = int(cfg["instances"])
    if instances < 1:
        raise ConfigError(f"instances must be >= 1, got {instances}")

    outdir = _outdir(cfg)
    worst = 0.0
    lines = []
    with open(outdir / "grad_check.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("method,instance,max_rel_err\n")
        for mi, method in enumerate(methods):
            rng = np.random.default_rng([int(cfg["seed"]), mi])
            errs = []
            for i in range(instances):
                policy, ref, batch, lcfg, state = random_grad_check_instance(
                    method, rng
                )
                err = grad_check(policy, ref, batch, lcfg, state=state)
                errs.append(err)
                fh.write(f"{method},{i},{err!r}\n")
            worst = max(worst, max(errs))
            lines.append(f"{method:>13s}: max rel err {max(errs):.3e}")
    _write_manifest(
        outdir / "grad_check.manifest.json",
        "diagnose grad-check",
        cfg,
        None,
        outdir,
        {"grad_check.csv": outdir / "grad_check.csv"},
        started,
    )
    for line in lines:
        print(line)
    ok = worst < GRAD_CHECK_TOLERANCE
    print(
        f"grad-check: {'PASS' if ok else 'FAIL'} "
        f"(max rel err {worst:.3e}, tolerance {GRAD_CHECK_TOLERANCE:.0e})"
    )
    return 0 if ok else 1


def cmd_diag_dists(args) -> int:
    started = time.monotonic()
    cfg = _resolve(_DISTS_DEFAULTS, args)
    dataset = _load_data(cfg)
    policy = _policy_for_diag(cfg, dataset)
    outdir = _outdir(cfg)
    files = {}
    means = {}
    for mode, name in (("conditional", "dists_conditional"), ("pmi", "dists_pmi")):
        values = delta_log_values(policy, dataset, mode)
        means[mode] = float(values.mean())
        hist = make_histogram(values, bins=int(cfg["bins"]))
        write_histogram_csv(outdir / f"{name}.csv", hist)
        files[f"{name}.csv"] = outdir / f"{name}.csv"
        if cfg["plots"]:
            from .plots import save_histogram_plot

            label = "delta log prob" if mode == "conditional" else "delta pmi"
            save_histogram_plot(hist, outdir / f"{name}.png", label)
            files[f"{name}.png"] = outdir / f"{name}.png"
    _write_manifest(
        outdir / "dists.manifest.json",
        "diagnose dists",
        cfg,
        cfg["data"],
        outdir,
        files,
        started,
    )
    print(
        f"mean delta log {means['conditional']:+.4f}, "
        f"mean delta pmi {means['pmi']:+.4f} over {len(dataset)} pairs"
    )
    return 0


def cmd_diag_density(args) -> int:
    started = time.monotonic()
    cfg = _resolve(_DENSITY_DEFAULTS, args)
    dataset = _load_data(cfg)
    values = reward_density(
        dataset, np.random.default_rng(int(cfg["seed"])), float(cfg["jitter"])
    )
    outdir = _outdir(cfg)
    files = {}
    with open(outdir / "density.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("sample,value\n")
        for i, v in enumerate(values):
            fh.write(f"{i},{float(v)!r}\n")
    files["density.csv"] = outdir / "density.csv"
    if cfg["plots"]:
        from .plots import save_density_plot

        save_density_plot(values, outdir / "density.png")
        files["density.png"] = outdir / "density.png"
    _write_manifest(
        outdir / "density.manifest.json",
        "diagnose density",
        cfg,
        cfg["data"],
        outdir,
        files,
        started,
    )
    print(
        f"wrote jittered rank view for {len(values)} samples "
        f"(jitter={float(cfg['jitter'])})"
    )
    return 0


def cmd_diag_gamma_hist(args) -> int:
    started = time.monotonic()
    cfg = _resolve(_GAMMA_HIST_DEFAULTS, args)
    dataset = _load_data(cfg)
    policy = _policy_for_diag(cfg, dataset)
    lcfg = LossConfig(
        method="rmipo",
        gamma_min=float(cfg["gamma_min"]),
        gamma_max=float(cfg["gamma_max"]),
        schedule=cfg["schedule"],
        schedule_scale=float(cfg["schedule_scale"]),
    )
    values = gamma_values(policy, dataset, lcfg)
    hist = make_histogram(values, bins=int(cfg["bins"]))
    outdir = _outdir(cfg)
    files = {}
    write_histogram_csv(outdir / "gamma_hist.csv", hist)
    files["gamma_hist.csv"] = outdir / "gamma_hist.csv"
    if cfg["plots"]:
        from .plots import save_histogram_plot

        save_histogram_plot(hist, outdir / "gamma_hist.png", "adaptive margin")
        files["gamma_hist.png"] = outdir / "gamma_hist.png"
    _write_manifest(
        outdir / "gamma_hist.manifest.json",
        "diagnose gamma-hist",
        cfg,
        cfg["data"],
        outdir,
        files,
        started,
    )
    occupied = int(np.count_nonzero(hist.counts))
    print(
        f"mean gamma {float(values.mean()):.4f}; "
        f"{occupied} of {len(hist.counts)} bins occupied"
    )
    return 0


def cmd_diag_dominance(args) -> int:
    started = time.monotonic()
    cfg = _resolve(_DOMINANCE_DEFAULTS, args)
    dataset = _load_data(cfg)
    base_cfg = TrainConfig(
        loss=LossConfig(method="unified-fixed"),
        steps=int(cfg["steps"]),
        batch_size=int(cfg["batch_size"]),
        lr=float(cfg["lr"]),
        seed=int(cfg["seed"]),
    )
    policy0 = zeros_policy(_vocab_size(cfg, dataset), int(cfg["order"]))
    rows = gamma_dominance_experiment(
        dataset,
        [float(b) for b in cfg["betas"]],
        [float(g) for g in cfg["gammas"]],
        base_cfg,
        policy0,
    )
    outdir = _outdir(cfg)
    files = {}
    write_dominance_csv(outdir / "dominance.csv", rows)
    files["dominance.csv"] = outdir / "dominance.csv"
    write_dominance_weights_csv(outdir / "dominance_weights.csv", rows)
    files["dominance_weights.csv"] = outdir / "dominance_weights.csv"
    if cfg["plots"]:
        from .plots import save_dominance_plot

        save_dominance_plot(rows, outdir / "dominance.png")
        files["dominance.png"] = outdir / "dominance.png"
    _write_manifest(
        outdir / "dominance.manifest.json",
        "diagnose dominance",
        cfg,
        cfg["data"],
        outdir,
        files,
        started,
    )
    for r in rows:
        print(
            f"beta={r.beta} gamma={r.gamma}: win rate {r.win_rate:.4f} "
            f"loss {r.final_loss:.4f}"
        )
    for gamma in sorted({r.gamma for r in rows}):
        rates = [r.win_rate for r in rows if r.gamma == gamma]
        print(f"gamma={gamma}: win rate spread across beta {max(rates) - min(rates):.4f}")
    return 0


# ---- argument parsing ----

def _csv_floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _csv_strings(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def _bounds_grid_arg(text: str) -> list[list[float]]:
    out = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        pieces = part.split(",")
        if len(pieces) != 2:
            raise argparse.ArgumentTypeError(
                f"bounds must be 'lo,hi' pairs separated by ';', got {part!r}"
            )
        out.append([float(pieces[0]), float(pieces[1])])
    return out


def _add_config_flag(p) -> None:
    p.add_argument(
        "--config", metavar="PATH", help="JSON config file or manifest to start from"
    )


def _add_loss_flags(p) -> None:
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--beta", type=float)
    p.add_argument("--gamma", type=float, help="fixed target margin")
    p.add_argument("--gamma-min", type=float)
    p.add_argument("--gamma-max", type=float)
    p.add_argument("--schedule", choices=SCHEDULES)
    p.add_argument("--schedule-scale", type=float)
    p.add_argument(
        "--length-norm",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="length-normalize sequence log probs (adaptive/fixed margin methods)",
    )
    p.add_argument("--tau", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--lambda-w", type=float)
    p.add_argument("--lambda-l", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--epsilon", type=float)


def _add_train_flags(p) -> None:
    _add_config_flag(p)
    p.add_argument("--dataset", dest="data", metavar="PATH", help="dataset JSONL path")
    p.add_argument("--out", metavar="DIR", help="run output directory")
    p.add_argument("--steps", type=int)
    p.add_argument("--batch", dest="batch_size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--optimizer", choices=("sgd", "adam"))
    p.add_argument("--lr-schedule", choices=("constant", "cosine"))
    p.add_argument("--seed", type=int)
    p.add_argument("--init", choices=("zeros", "gaussian"))
    p.add_argument("--init-stdev", type=float)
    p.add_argument("--init-seed", type=int)
    p.add_argument("--vocab", type=int, help="vocab size (default: infer from data)")
    p.add_argument("--order", type=int, help="context window length k")
    p.add_argument("--no-plots", action="store_true", default=False)
    _add_loss_flags(p)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="preflab",
        description=(
            "Exact tabular laboratory for offline preference optimization: "
            "synthetic corpora, eleven objectives, adaptive margins, and "
            "numerical diagnostics."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic preference dataset")
    _add_config_flag(p)
    p.add_argument("--out", metavar="PATH", help="output JSONL path")
    p.add_argument("--mode", choices=("gap", "mixed", "popularity"))
    p.add_argument("--n", type=int)
    p.add_argument("--vocab", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--max-prompt-len", type=int)
    p.add_argument("--max-resp-len", type=int)
    p.add_argument("--scale", type=float, help="oracle weight scale")
    p.add_argument("--relevance", type=float, help="prompt-dependent weight share")
    p.add_argument("--length-penalty", type=float)
    p.add_argument("--gap-lo", type=float, help="keep pairs with |gap| >= this")
    p.add_argument("--gap-hi", type=float, help="keep pairs with |gap| < this")
    p.add_argument("--tilt", type=float, help="popularity mode: sampling tilt")
    p.add_argument("--popular-count", type=int)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train one objective on a dataset")
    _add_train_flags(p)
    p.add_argument("--dump-diagnostics", action="store_true", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="train every point of a hyperparameter grid")
    _add_train_flags(p)
    p.add_argument("--methods", type=_csv_strings, help="comma-separated methods")
    p.add_argument("--betas", type=_csv_floats, help="comma-separated betas")
    p.add_argument("--gammas", type=_csv_floats, help="comma-separated gammas")
    p.add_argument(
        "--bounds",
        type=_bounds_grid_arg,
        help="margin bound pairs, e.g. '0,2;0.3,1.6'",
    )
    p.add_argument("--schedules", type=_csv_strings)
    p.add_argument("--workers", type=int, help="parallel jobs (default: grid size)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("diagnose", help="numerical audits and distribution views")
    dsub = p.add_subparsers(dest="subcommand", required=True)

    d = dsub.add_parser("grad-check", help="finite-difference gradient audit")
    _add_config_flag(d)
    d.add_argument("--out", metavar="DIR")
    d.add_argument("--seed", type=int)
    d.add_argument("--instances", type=int, help="random instances per method")
    d.add_argument("--methods", type=_csv_strings)
    d.add_argument("--all-methods", action="store_true", default=False)
    d.set_defaults(func=cmd_diag_grad_check)

    d = dsub.add_parser("dists", help="delta log prob and delta pmi histograms")
    _add_config_flag(d)
    d.add_argument("--dataset", dest="data", metavar="PATH")
    d.add_argument("--checkpoint", metavar="PATH")
    d.add_argument("--vocab", type=int)
    d.add_argument("--order", type=int)
    d.add_argument("--bins", type=int)
    d.add_argument("--out", metavar="DIR")
    d.add_argument("--no-plots", action="store_true", default=False)
    d.set_defaults(func=cmd_diag_dists)

    d = dsub.add_parser("density", help="jittered view of labeled rank gaps")
    _add_config_flag(d)
    d.add_argument("--dataset", dest="data", metavar="PATH")
    d.add_argument("--jitter", type=float)
    d.add_argument("--seed", type=int)
    d.add_argument("--out", metavar="DIR")
    d.add_argument("--no-plots", action="store_true", default=False)
    d.set_defaults(func=cmd_diag_density)

    d = dsub.add_parser("gamma-hist", help="histogram of adaptive margins")
    _add_config_flag(d)
    d.add_argument("--dataset", dest="data", metavar="PATH")
    d.add_argument("--checkpoint", metavar="PATH")
    d.add_argument("--vocab", type=int)
    d.add_argument("--order", type=int)
    d.add_argument("--bins", type=int)
    d.add_argument("--gamma-min", type=float)
    d.add_argument("--gamma-max", type=float)
    d.add_argument("--schedule", choices=SCHEDULES)
    d.add_argument("--schedule-scale", type=float)
    d.add_argument("--out", metavar="DIR")
    d.add_argument("--no-plots", action="store_true", default=False)
    d.set_defaults(func=cmd_diag_gamma_hist)

    d = dsub.add_parser(
        "dominance", help="fixed-margin grid: margin drives the ranking, beta the pace"
    )
    _add_config_flag(d)
    d.add_argument("--dataset", dest="data", metavar="PATH")
    d.add_argument("--betas", type=_csv_floats)
    d.add_argument("--gammas", type=_csv_floats)
    d.add_argument("--steps", type=int)
    d.add_argument("--batch", dest="batch_size", type=int)
    d.add_argument("--lr", type=float)
    d.add_argument("--seed", type=int)
    d.add_argument("--vocab", type=int)
    d.add_argument("--order", type=int)
    d.add_argument("--out", metavar="DIR")
    d.add_argument("--no-plots", action="store_true", default=False)
    d.set_defaults(func=cmd_diag_dominance)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return int(args.func(args))
    except (ConfigError, DataFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
