"""``cnsl`` command-line entry point.

Exit codes: 0 success, 2 usage or configuration error, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .agentsim import calibrate, export_episodes, init_world, run_episodes
from .config import ConfigError, RunConfig, load_config, set_value, write_snapshot
from .dataset import cross_platform_like, read_dataset, read_meta, split_indices, toy_cross_network, write_dataset
from .diffusion import DiffusionConfig, generate_dataset
from .experiments import run_experiment_grid, write_predictions
from .graph import validate
from .lpsi import lpsi_cross
from .model import CnslModel, infer_seeds, train

log = logging.getLogger("cnsl")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 2, 3
TRAIN_TIMING = "train_timing.json"   # wall clock kept out of the checkpoint so it stays deterministic


class UsageError(Exception):
    pass


# ------------------------------------------------------------------ helpers


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def parse_diffusion(spec: str) -> tuple[str, str]:
    """``"lt2ic"`` -> ``("LT", "IC")``."""
    parts = spec.lower().split("2")
    models = ("lt", "ic", "sis")
    if len(parts) != 2 or parts[0] not in models or parts[1] not in models:
        raise ConfigError(f"bad diffusion pair {spec!r}; expected <lt|ic|sis>2<lt|ic|sis>")
    return parts[0].upper(), parts[1].upper()


def resolve_threads(args, cfg: RunConfig) -> int:
    if getattr(args, "threads", None) is not None:
        return args.threads
    env = os.environ.get("CNSL_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"CNSL_THREADS must be an integer, got {env!r}") from None
        if n < 1:
            raise ConfigError("CNSL_THREADS must be >= 1")
        return n
    return cfg.threads


# flag dest -> (section, key)
OVERRIDES = {
    "seed": ("run", "seed"),
    "test_fraction": ("run", "test_fraction"),
    "kind": ("data", "kind"),
    "diffusion": ("data", "diffusion"),
    "samples": ("data", "samples"),
    "seed_fraction": ("data", "seed_fraction"),
    "mode": ("agents", "mode"),
    "epochs": ("train", "epochs"),
    "batch_size": ("train", "batch_size"),
    "lr_vae": ("train", "lr_vae"),
    "augment_seed_sets": ("train", "augment_seed_sets"),
    "capacity": ("train", "capacity_s"),
    "objective": ("infer", "objective"),
    "eta": ("infer", "eta"),
    "alpha": ("infer", "alpha"),
    "k": ("infer", "k"),
    "rule": ("infer", "rule"),
    "n_seeds": ("infer", "n_seeds"),
    "restarts": ("infer", "restarts"),
    "seed_weight": ("infer", "seed_weight"),
    "pool": ("infer", "pool"),
    "lpsi_alpha": ("lpsi", "alpha"),
}


def build_config(args) -> RunConfig:
    cfg = load_config(getattr(args, "config", None))
    for dest, (section, key) in OVERRIDES.items():
        v = getattr(args, dest, None)
        if v is not None:
            set_value(cfg, section, key, v)
            if dest == "capacity":
                set_value(cfg, section, "capacity_fs", v)
    if getattr(args, "ic_edge_prob", None) is not None:
        for side in ("diffusion.source", "diffusion.target"):
            set_value(cfg, side, "ic_edge_prob", args.ic_edge_prob)
    cfg.section("run")["threads"] = resolve_threads(args, cfg)
    # stage seeds default to the run seed, recorded explicitly so snapshots replay exactly
    for section in ("train", "infer"):
        cfg.section(section).setdefault("rng_seed", cfg.seed)
    return cfg


def _require_dir(path, what: str) -> Path:
    p = Path(path)
    if not p.is_dir():
        raise UsageError(f"{what} not found: {p}")
    return p


def _require_file(path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} not found: {p}")
    return p


def _dataset_label(meta: dict, directory: Path) -> str:
    return meta.get("label") or directory.name


def _mean_seed_count(samples, indices) -> int:
    return int(round(np.mean([np.sum(samples[i].x_s > 0) for i in indices])))


# ------------------------------------------------------------------ commands


def cmd_simulate_data(args, cfg: RunConfig) -> int:
    data = cfg.build("data")
    run = cfg.build("run")
    out = Path(args.out)
    threads = cfg.threads
    if data.samples < 1:
        raise ConfigError("samples must be >= 1")
    if data.kind == "agents":
        agents = cfg.build("agents", episodes=data.samples)
        if agents.mode not in ("D0", "D1"):
            raise ConfigError(f"[agents] mode must be D0 or D1, got {agents.mode!r}")
        sched = cfg.build("schedule")
        world = init_world(agents.n_agents, None, sched, run.seed)
        episodes = run_episodes(world, agents.episodes, agents.n_seeds, agents.days, workers=threads)
        train_idx, test_idx = split_indices(len(episodes), run.test_fraction)
        export_episodes(episodes, agents.mode, out, {
            "label": f"G2S-{agents.mode}", "seed": run.seed, "n_agents": agents.n_agents,
            "n_seeds": agents.n_seeds, "days": agents.days, "schedule": sched.to_dict(),
            "split": {"train": train_idx, "test": test_idx}})
    elif data.kind in ("cross-platform", "toy"):
        m_s, m_t = parse_diffusion(data.diffusion)
        cfg_s = cfg.build("diffusion.source", model=m_s)
        cfg_t = cfg.build("diffusion.target", model=m_t)
        if data.kind == "toy":
            cross = toy_cross_network(run.seed, data.toy_source_nodes, data.toy_target_nodes)
        else:
            cross = cross_platform_like(run.seed, data.bridges_per_source, data.attach_bias)
        samples = generate_dataset(cross, data.samples, data.seed_fraction, cfg_s, cfg_t, run.seed,
                                   workers=threads)
        train_idx, test_idx = split_indices(len(samples), run.test_fraction)
        write_dataset(out, cross, samples, {
            "kind": data.kind, "label": f"{m_s}2{m_t}" if data.kind == "cross-platform" else f"toy-{m_s}2{m_t}",
            "seed": run.seed, "seed_fraction": data.seed_fraction,
            "diffusion_source": cfg_s.to_dict(), "diffusion_target": cfg_t.to_dict(),
            "split": {"train": train_idx, "test": test_idx}})
    else:
        raise ConfigError(f"[data] kind must be cross-platform, toy or agents, got {data.kind!r}")
    write_snapshot(cfg, out, {"command": "simulate-data"})
    print(f"wrote dataset to {out}")
    return EXIT_OK


def _train_model(data_dir: Path, cfg: RunConfig):
    cross, samples, meta = read_dataset(data_dir)
    train_idx, _ = _split(meta, cfg)
    model = CnslModel(cross, **cfg.build("model").__dict__, seed=cfg.seed)
    tcfg = cfg.build("train")
    t0 = time.perf_counter()
    result = train(model, [samples[i] for i in train_idx], tcfg,
                   progress=lambda ep, r: log.info("epoch %d loss %.5f", ep, r.epoch_loss[-1]))
    return model, result, time.perf_counter() - t0, tcfg


def _split(meta: dict, cfg: RunConfig):
    split = meta.get("split")
    if split:
        return list(split["train"]), list(split["test"])
    return split_indices(meta["n_samples"], cfg.build("run").test_fraction)


def _write_history(result, path: Path) -> None:
    keys = ["epoch", "batch", "total", "recon", "diff_source", "diff_target", "kl_s", "kl_fs", "capacity",
            "monotone"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys)
        for h in result.history:
            w.writerow([h[k] if k in ("epoch", "batch") else repr(float(h[k])) for k in keys])


def cmd_train(args, cfg: RunConfig) -> int:
    data_dir = _require_dir(args.data, "dataset directory")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model, result, seconds, tcfg = _train_model(data_dir, cfg)
    model.save(out / "model.ckpt", extra={"dataset": str(data_dir), "best_epoch": result.best_epoch})
    (out / TRAIN_TIMING).write_text(json.dumps({"train_seconds": seconds}) + "\n", encoding="utf-8")
    _write_history(result, out / "history.csv")
    write_snapshot(cfg, out, {"command": "train", "data": data_dir})
    print(f"trained {tcfg.epochs} epochs (batch {tcfg.batch_size}) in {seconds:.1f}s; "
          f"checkpoint {out / 'model.ckpt'}")
    return EXIT_OK


def _run_inference(model, data_dir: Path, cfg: RunConfig, out: Path, train_seconds: float) -> None:
    cross, samples, meta = read_dataset(data_dir)
    train_idx, test_idx = _split(meta, cfg)
    icfg = cfg.build("infer")
    seed_sets = [samples[i].x_s for i in train_idx]
    scores, seeds, times = [], [], []
    out.mkdir(parents=True, exist_ok=True)
    for i in test_idx:
        t0 = time.perf_counter()
        x, probs, trace = infer_seeds(model, samples[i].y_t, seed_sets, icfg)
        times.append(time.perf_counter() - t0)
        scores.append(probs)
        seeds.append(x)
        (out / f"trace_{i}.json").write_text(json.dumps(trace, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    write_predictions(out, "CNSL", data_dir, _dataset_label(meta, data_dir), test_idx, scores, seeds,
                      train_seconds, times, {"objective": icfg.objective, "eta": icfg.eta, "seed": cfg.seed})


def cmd_infer(args, cfg: RunConfig) -> int:
    data_dir = _require_dir(args.data, "dataset directory")
    ckpt = _require_file(args.checkpoint, "checkpoint")
    cross, _, _ = read_dataset(data_dir)
    try:
        model = CnslModel.load(ckpt, cross)
    except (KeyError, ValueError) as exc:
        raise UsageError(f"{ckpt}: {exc}") from None
    timing = ckpt.parent / TRAIN_TIMING
    train_seconds = json.loads(timing.read_text(encoding="utf-8"))["train_seconds"] if timing.is_file() else 0.0
    out = Path(args.out)
    _run_inference(model, data_dir, cfg, out, train_seconds)
    write_snapshot(cfg, out, {"command": "infer", "data": data_dir, "checkpoint": ckpt})
    print(f"wrote predictions to {out}")
    return EXIT_OK


def _run_lpsi(data_dir: Path, cfg: RunConfig, out: Path) -> None:
    cross, samples, meta = read_dataset(data_dir)
    train_idx, test_idx = _split(meta, cfg)
    lcfg = cfg.build("lpsi")
    m = lcfg.n_seeds if lcfg.n_seeds is not None else _mean_seed_count(samples, train_idx)
    scores, seeds, times = [], [], []
    for i in test_idx:
        t0 = time.perf_counter()
        x, s = lpsi_cross(cross, samples[i].y_t, lcfg, n_seeds=m)
        times.append(time.perf_counter() - t0)
        scores.append(s)
        seeds.append(x)
    write_predictions(out, "LPSI", data_dir, _dataset_label(meta, data_dir), test_idx, scores, seeds, 0.0, times,
                      {"alpha": lcfg.alpha, "seed": cfg.seed})


def cmd_baseline(args, cfg: RunConfig) -> int:
    data_dir = _require_dir(args.data, "dataset directory")
    out = Path(args.out)
    _run_lpsi(data_dir, cfg, out)
    write_snapshot(cfg, out, {"command": "baseline lpsi", "data": data_dir})
    print(f"wrote LPSI predictions to {out}")
    return EXIT_OK


def cmd_evaluate(args, cfg: RunConfig) -> int:
    dirs = [Path(p) for p in args.predictions]
    if not dirs:
        raise UsageError("nothing to evaluate: no prediction directories given")
    for d in dirs:
        if d.is_dir() and not any(d.iterdir()):
            raise UsageError(f"nothing to evaluate: {d} is empty")
    rows = run_experiment_grid(dirs, args.out, {"seed": cfg.seed})
    if not rows:
        raise UsageError("nothing to evaluate: no readable prediction sets")
    write_snapshot(cfg, args.out, {"command": "evaluate"})
    print(Path(args.out, "metrics.md").read_text(encoding="utf-8"), end="")
    return EXIT_OK


def cmd_benchmark(args, cfg: RunConfig) -> int:
    out = Path(args.out)
    methods = [m.strip().lower() for m in args.methods.split(",") if m.strip()]
    unknown = set(methods) - {"cnsl", "lpsi"}
    if unknown:
        raise UsageError(f"unknown methods: {', '.join(sorted(unknown))}")
    pred_dirs = []
    for data in args.data:
        data_dir = _require_dir(data, "dataset directory")
        label = _dataset_label(read_meta(data_dir), data_dir)
        if "cnsl" in methods:
            model, result, seconds, _ = _train_model(data_dir, cfg)
            d = out / "predictions" / label / "cnsl"
            _run_inference(model, data_dir, cfg, d, seconds)
            pred_dirs.append(d)
        if "lpsi" in methods:
            d = out / "predictions" / label / "lpsi"
            _run_lpsi(data_dir, cfg, d)
            pred_dirs.append(d)
    run_experiment_grid(pred_dirs, out, {"seed": cfg.seed})
    write_snapshot(cfg, out, {"command": "benchmark"})
    print((out / "metrics.md").read_text(encoding="utf-8"), end="")
    return EXIT_OK


def cmd_validate(args, cfg: RunConfig) -> int:
    data_dir = _require_dir(args.data, "dataset directory")
    cross, samples, meta = read_dataset(data_dir)
    problems = validate(cross)
    for i, s in enumerate(samples):
        if not np.isin(s.x_s, (0.0, 1.0)).all():
            problems.append(f"sample {i}: x_s is not binary")
        for part, n in (("x_s", cross.n_source), ("y_s", cross.n_source), ("x_t", cross.n_target),
                        ("y_t", cross.n_target)):
            v = getattr(s, part)
            if v.shape != (n,) or np.any((v < 0) | (v > 1)):
                problems.append(f"sample {i}: {part} has wrong size or values outside [0, 1]")
    for p in problems:
        print(p)
    if problems:
        return EXIT_RUNTIME
    print(f"{data_dir}: ok ({cross.n_source} source / {cross.n_target} target nodes, "
          f"{len(cross.bridges)} bridges, {len(samples)} samples)")
    return EXIT_OK


def cmd_calibrate(args, cfg: RunConfig) -> int:
    agents = cfg.build("agents")
    scales = [float(s) for s in args.scales.split(",")]
    rows = calibrate(agents.n_agents, cfg.build("schedule"), scales, agents.episodes, agents.n_seeds,
                     agents.days, cfg.seed, workers=cfg.threads)
    keys = list(rows[0])
    print("\t".join(keys))
    for r in rows:
        print("\t".join(str(r[k]) for k in keys))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "calibration.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, keys, lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
        write_snapshot(cfg, out, {"command": "calibrate"})
    return EXIT_OK


# ------------------------------------------------------------------ parser


def _train_flags(p) -> None:
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=_positive_int)
    p.add_argument("--lr-vae", type=float)
    p.add_argument("--augment-seed-sets", type=int)
    p.add_argument("--capacity", type=float, help="KL capacity for both encoders")


def _infer_flags(p) -> None:
    p.add_argument("--objective", choices=["observed", "spread-max"])
    p.add_argument("--eta", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--k", type=_positive_int)
    p.add_argument("--rule", choices=["top-m", "threshold"])
    p.add_argument("--n-seeds", type=_positive_int)
    p.add_argument("--restarts", type=_positive_int)
    p.add_argument("--seed-weight", type=float)
    p.add_argument("--pool", choices=("best", "weighted"))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file (see docs/config.md)")
    common.add_argument("--seed", type=int, help="global rng seed")
    common.add_argument("--threads", type=_positive_int, help="worker cap (default: CNSL_THREADS or 1)")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="cnsl", description="Cross-network source localization.")
    p.add_argument("--version", action="version", version=f"cnsl {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate-data", parents=[common], help="generate a dataset")
    s.add_argument("--kind", choices=["cross-platform", "toy", "agents"])
    s.add_argument("--diffusion", help="source2target models, e.g. lt2ic")
    s.add_argument("--samples", type=_positive_int, help="samples (episodes for --kind agents)")
    s.add_argument("--seed-fraction", type=float)
    s.add_argument("--ic-edge-prob", type=float, help="IC edge probability on both networks")
    s.add_argument("--mode", choices=["D0", "D1"], help="agent seed mode")
    s.add_argument("--test-fraction", type=float)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate_data)

    t = sub.add_parser("train", parents=[common], help="train a CNSL model")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    _train_flags(t)
    t.set_defaults(func=cmd_train)

    i = sub.add_parser("infer", parents=[common], help="infer seeds for the test samples")
    i.add_argument("--data", required=True)
    i.add_argument("--checkpoint", required=True)
    i.add_argument("--out", required=True)
    _infer_flags(i)
    i.set_defaults(func=cmd_infer)

    b = sub.add_parser("baseline", help="run a baseline")
    bsub = b.add_subparsers(dest="baseline", required=True)
    bl = bsub.add_parser("lpsi", parents=[common], help="label-propagation source identification")
    bl.add_argument("--data", required=True)
    bl.add_argument("--out", required=True)
    bl.add_argument("--alpha", dest="lpsi_alpha", type=float)
    bl.set_defaults(func=cmd_baseline)

    e = sub.add_parser("evaluate", parents=[common], help="metric tables from prediction directories")
    e.add_argument("--predictions", nargs="+", required=True)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_evaluate)

    bm = sub.add_parser("benchmark", parents=[common], help="train, infer and evaluate with timings")
    bm.add_argument("--data", nargs="+", required=True)
    bm.add_argument("--methods", default="cnsl,lpsi")
    _train_flags(bm)
    _infer_flags(bm)
    bm.add_argument("--out", required=True)
    bm.set_defaults(func=cmd_benchmark)

    v = sub.add_parser("validate", parents=[common], help="check a dataset directory")
    v.add_argument("--data", required=True)
    v.set_defaults(func=cmd_validate)

    c = sub.add_parser("calibrate", parents=[common], help="sweep agent transmission rates")
    c.add_argument("--scales", default="0.8,0.9,1.0,1.1,1.2", help="comma-separated rate multipliers")
    c.add_argument("--out")
    c.set_defaults(func=cmd_calibrate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(args)
        return args.func(args, cfg)
    except (ConfigError, UsageError) as exc:
        print(f"cnsl: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - reported with the runtime exit code
        log.debug("failure", exc_info=True)
        print(f"cnsl: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
