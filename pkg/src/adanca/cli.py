"""``adanca`` command line: train, eval, attack, dump-activations,
analyze-placement, noise-map and metrics.

Exit codes: 0 success, 1 contract or I/O failure (message on stderr),
2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig
from .data import load_dataset
from .errors import AdaNCAError, FormatError, InputError
from .numerics.rng import Rng
from .placement import (find_optimal_partition, format_matrix_csv, improvement, network_redundancy,
                        robustness_metrics, set_cohesion_index, similarity_matrix)
from .robustness import (DEFAULT_MAGNITUDES, AccuracyMap, PgdConfig, accuracy_map_similarity,
                         compared_cells, default_bands, evaluate, noise_sensitivity_map, pgd_attack)
from .store import atomic_write_text, read_store, write_store
from .train import OptimConfig, train
from .vit import HostModel, activation_dump, count_params_flops

# seed stream ids; fixed so a run directory's config reproduces the run
_MODEL_STREAM, _ADAPTOR_STREAM, _TRAIN_STREAM = 1, 2, 3


def _load_data(path, model: HostModel, limit: int | None = None):
    images, labels = load_dataset(path, model.cfg.num_classes)
    if limit is not None:
        images, labels = images[:limit], labels[:limit]
    if len(labels) == 0:
        raise InputError(f"{path}: dataset is empty")
    return images, labels


def _resolve(path: str, base: Path) -> str:
    if not path:
        return path
    p = Path(path)
    return str(p if p.is_absolute() else (base / p).resolve())


def build_from_run(run: RunConfig) -> HostModel:
    """Fresh seeded model (host plus configured adaptors) for a run config."""
    seed = run["seed"]
    vit = run.vit_config()
    model = HostModel(vit, Rng(seed, _MODEL_STREAM))
    arng = Rng(seed, _ADAPTOR_STREAM)
    for pos, acfg in run.adaptor_specs(vit):
        model.insert_adanca(pos, acfg, arng.spawn(pos))
    return model


# -- subcommands -------------------------------------------------------------

def cmd_train(args) -> int:
    cfg_path = Path(args.config)
    run = RunConfig.load(cfg_path, args.set)
    base = cfg_path.resolve().parent
    for key, flag in (("data.train", args.train_data), ("data.test", args.test_data)):
        run.values[key] = _resolve(flag, Path.cwd()) if flag else _resolve(run[key], base)
    if not run["data.train"]:
        raise InputError("no training data: set data.train in the config or pass --train-data")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    model = build_from_run(run)
    images, labels = _load_data(run["data.train"], model)
    model.fit_input_stats(images)
    params, flops = count_params_flops(model)
    opt = OptimConfig.from_run(run)
    atomic_write_text(out / "config.txt", run.to_text({"version": __version__, "seed": run["seed"]}))

    log_rows = []

    def log(rec):
        log_rows.append(rec)
        if not args.quiet:
            print(f"epoch {rec['epoch']:3d}  loss {rec['loss']:.4f}  train_acc {rec['train_acc']:6.2f}  "
                  f"lr {rec['lr']:.5f}  {rec['seconds']:.0f}s", flush=True)

    t0 = time.time()
    train(model, images, labels, opt, Rng(run["seed"], _TRAIN_STREAM), log, args.time_budget)
    save_checkpoint(model, out / "model.anct")
    buf = io.StringIO()
    if log_rows:
        w = csv.DictWriter(buf, fieldnames=list(log_rows[0]))
        w.writeheader()
        w.writerows(log_rows)
    atomic_write_text(out / "train_log.csv", buf.getvalue())

    summary = {"version": __version__, "seed": run["seed"], "params": params, "flops": flops,
               "adaptor_positions": model.adaptor_positions, "epochs_run": len(log_rows),
               "train_seconds": round(time.time() - t0, 2)}
    if run["data.test"]:
        test_images, test_labels = _load_data(run["data.test"], model)
        summary["test_acc"] = evaluate(model, test_images, test_labels)
        print(f"test accuracy = {summary['test_acc']:.4f}")
    atomic_write_text(out / "run.json", json.dumps(summary, indent=2) + "\n")
    print(f"params = {params}  flops = {flops}")
    print(f"wrote {out / 'model.anct'}")
    return 0


def cmd_eval(args) -> int:
    model = load_checkpoint(args.checkpoint)
    images, labels = _load_data(args.data, model, args.limit)
    print(f"accuracy = {evaluate(model, images, labels):.4f}")
    return 0


def cmd_attack(args) -> int:
    model = load_checkpoint(args.checkpoint)
    images, labels = _load_data(args.data, model, args.limit)
    pgd = PgdConfig.from_255(args.epsilon, args.step_size, args.steps)
    clean = evaluate(model, images, labels)
    adv_images = pgd_attack(model, images, labels, pgd)
    adv = evaluate(model, adv_images, labels)
    beta, gamma = robustness_metrics(clean, adv, args.baseline_beta)
    print(f"alpha = {clean:.4f}")
    print(f"alpha' = {adv:.4f}")
    print(f"beta = {beta:.4f}")
    if gamma is not None:
        print(f"gamma = {gamma:.4f}")
    if args.report:
        atomic_write_text(args.report, "clean_acc,adv_acc,beta,epsilon_255,step_size_255,steps\n"
                          f"{clean:.6g},{adv:.6g},{beta:.6g},{args.epsilon:g},{args.step_size:g},{args.steps}\n")
    return 0


def cmd_dump(args) -> int:
    model = load_checkpoint(args.checkpoint)
    images, _ = _load_data(args.data, model, args.limit)
    write_store(args.out, activation_dump(model, images))
    print(f"wrote {model.cfg.depth} block outputs for {len(images)} images to {args.out}")
    return 0


def read_dump(path) -> list[np.ndarray]:
    entries = read_store(path)
    blocks = {}
    for name, arr in entries.items():
        parts = name.split(".")
        if len(parts) == 3 and parts[0] == "block" and parts[2] == "out" and parts[1].isdigit():
            blocks[int(parts[1])] = arr
    if not blocks:
        raise FormatError(f"{path}: no 'block.<i>.out' entries")
    L = max(blocks)
    missing = sorted(set(range(1, L + 1)) - set(blocks))
    if missing:
        raise FormatError(f"{path}: missing block outputs {missing}")
    return [blocks[i] for i in range(1, L + 1)]


def cmd_placement(args) -> int:
    acts = read_dump(args.dump)
    S = similarity_matrix(acts, args.max_rows, args.seed)
    L = S.shape[0]
    print(f"similarity (linear CKA), {L} layers")
    print(format_matrix_csv(S), end="")
    print("redundancy K(i) = kappa(1,i) + kappa(i+1,L)")
    for i in range(1, L):
        print(f"  i={i}  K={network_redundancy(S, i):.6g}")
    part = find_optimal_partition(S, args.stages)
    spans = " ".join(f"[{a}-{b}]" for a, b in part.spans)
    print(f"partition (stages={args.stages}): {spans}  value={part.value:.6g}")
    print("insert after layers: " + (",".join(str(p) for p in part.insert_positions) or "-"))
    if args.similarity_csv:
        atomic_write_text(args.similarity_csv, format_matrix_csv(S))
    if args.partition_csv:
        rows = ["stage,start,end,kappa\n"] + [
            f"{k},{a},{b},{set_cohesion_index(S, a, b):.6g}\n" for k, (a, b) in enumerate(part.spans, 1)]
        atomic_write_text(args.partition_csv, "".join(rows))
    return 0


def cmd_noise_map(args) -> int:
    model = load_checkpoint(args.checkpoint)
    images, labels = _load_data(args.data, model, args.limit)
    mags = args.magnitudes if args.magnitudes is not None else list(DEFAULT_MAGNITUDES)
    bands = default_bands(model.cfg.image_size, args.bands)
    amap = noise_sensitivity_map(model, images, labels, mags, bands, Rng(args.seed, 0xB0))
    atomic_write_text(args.out, amap.to_csv())
    header = "magnitude " + " ".join(f"{lo:5.2f}-{hi:<5.2f}" for lo, hi in bands)
    print(header)
    for m, row in zip(mags, amap.values):
        print(f"{m:9.3f} " + " ".join(f"{v:11.2f}" for v in row))
    print(f"wrote {args.out}")
    return 0


def _read_report(path) -> tuple[float, float]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if len(rows) != 1 or not {"clean_acc", "adv_acc"} <= set(rows[0]):
        raise FormatError(f"{path}: expected one row with clean_acc and adv_acc columns")
    return float(rows[0]["clean_acc"]), float(rows[0]["adv_acc"])


def cmd_metrics(args) -> int:
    if not (args.report or args.map):
        raise InputError("metrics needs --report and/or --map")
    if args.report:
        beta, _ = robustness_metrics(*_read_report(args.report))
        print(f"beta = {beta:.4f}")
        if args.baseline_report:
            base_beta, _ = robustness_metrics(*_read_report(args.baseline_report))
            print(f"beta_base = {base_beta:.4f}")
            print(f"gamma = {improvement(beta, base_beta):.4f}")
    if args.map:
        if not args.reference:
            raise InputError("--map needs --reference")
        a = AccuracyMap.from_csv(Path(args.map).read_text(encoding="utf-8"))
        b = AccuracyMap.from_csv(Path(args.reference).read_text(encoding="utf-8"))
        g = accuracy_map_similarity(a, b, args.skip_levels)
        print(f"Gamma = {g:.4f}  (cells compared: {compared_cells(a, args.skip_levels)})")
    return 0


# -- parser ------------------------------------------------------------------

def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="adanca", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"adanca {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a host (plus configured adaptors) and write a run directory")
    t.add_argument("--config", required=True)
    t.add_argument("--out", required=True, help="run directory")
    t.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="config override")
    t.add_argument("--train-data")
    t.add_argument("--test-data")
    t.add_argument("--time-budget", type=float, help="stop after the epoch that exceeds this many seconds")
    t.add_argument("--quiet", action="store_true")
    t.set_defaults(func=cmd_train)

    def model_data(sp):
        sp.add_argument("--checkpoint", required=True)
        sp.add_argument("--data", required=True)
        sp.add_argument("--limit", type=int, help="use only the first N examples")

    e = sub.add_parser("eval", help="print test-mode accuracy")
    model_data(e)
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("attack", help="PGD attack; prints alpha, alpha' and beta")
    model_data(a)
    a.add_argument("--epsilon", type=float, default=1.0, help="L-inf budget in 1/255 units")
    a.add_argument("--step-size", type=float, default=0.5, help="step size in 1/255 units")
    a.add_argument("--steps", type=int, default=5)
    a.add_argument("--baseline-beta", type=float, help="baseline beta (percent) to report gamma")
    a.add_argument("--report", help="write a one-row CSV report")
    a.set_defaults(func=cmd_attack)

    d = sub.add_parser("dump-activations", help="write block.<i>.out activations")
    model_data(d)
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_dump, limit=512)

    pl = sub.add_parser("analyze-placement", help="CKA matrix, redundancy and optimal partition")
    pl.add_argument("--dump", required=True)
    pl.add_argument("--stages", type=int, default=2)
    pl.add_argument("--max-rows", type=int, default=4096)
    pl.add_argument("--seed", type=int, default=0)
    pl.add_argument("--similarity-csv")
    pl.add_argument("--partition-csv")
    pl.set_defaults(func=cmd_placement)

    n = sub.add_parser("noise-map", help="accuracy over noise magnitude x frequency band")
    model_data(n)
    n.add_argument("--out", required=True)
    n.add_argument("--magnitudes", type=_float_list, help="comma-separated noise stds")
    n.add_argument("--bands", type=int, default=6, help="number of log-spaced bands")
    n.add_argument("--seed", type=int, default=0)
    n.set_defaults(func=cmd_noise_map)

    m = sub.add_parser("metrics", help="beta/gamma from attack reports, Gamma from accuracy maps")
    m.add_argument("--report")
    m.add_argument("--baseline-report")
    m.add_argument("--map")
    m.add_argument("--reference")
    m.add_argument("--skip-levels", type=int, default=2)
    m.set_defaults(func=cmd_metrics)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (AdaNCAError, OSError) as exc:
        print(f"adanca {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
