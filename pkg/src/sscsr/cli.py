"""``sscsr`` command line: simulate, train, eval, bench and plot-loss.

Exit status: 0 success, 1 unexpected failure, 2 configuration or shape
mismatch, 3 malformed data or checkpoint file, 4 training divergence.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import statistics
import sys
from dataclasses import replace
from pathlib import Path

from .config import load_run_config, resolve_seed
from .dataio import DataCondition, assign_condition, read_dataset, write_dataset
from .errors import ConfigError, FormatError, ShapeError, SscsrError, TrainingDivergence
from .figures import curves_csv, line_chart_svg, scaled_ce_curves
from .netcore import load_checkpoint, save_checkpoint
from .sigsim import draw_profiles, simulate_dataset
from .trainer import EmaMode, Trainer, evaluate, stability_trials

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_FORMAT, EXIT_DIVERGED = 0, 1, 2, 3, 4

DATASET_FILE = "dataset.sscsr"
CHECKPOINT_FILE = "model.ssckpt"
REPORT_FILE = "report.json"
CONFUSION_FILE = "confusion.csv"
BENCH_FILE = "bench.csv"
BENCH_RUNS_FILE = "bench_runs.json"
CURVES_CSV = "scaled_ce.csv"
CURVES_SVG = "scaled_ce.svg"

BENCH_COLUMNS = (
    "form", "condition", "gamma", "best_accuracy", "median_accuracy", "m", "n", "trials", "status",
)


def _parser():
    p = argparse.ArgumentParser(prog="sscsr", description="Semi-supervised signal recognition lab.")
    p.add_argument("command", choices=("simulate", "train", "eval", "bench", "plot-loss"))
    p.add_argument("--config", help="JSON run-config (defaults apply when omitted)")
    p.add_argument("--out", default="out", help="output directory (default: ./out)")
    p.add_argument("--seed", type=int, help="overrides the config seed and $SSCSR_SEED")
    p.add_argument("--jobs", type=int, default=1, help="parallel trials for bench")
    p.add_argument("--deterministic", action="store_true",
                   help="byte-identical outputs for identical inputs (drops wall-clock fields)")
    p.add_argument("--supervised-only", action="store_true", help="ignore unlabeled data (same as N = 0)")
    p.add_argument("--data", help="dataset file; train/bench simulate one from the config when omitted")
    p.add_argument("--checkpoint", help="checkpoint for eval (default: <out>/model.ssckpt)")
    p.add_argument("--quiet", action="store_true", help="no per-epoch progress lines")
    return p


def _write_json(path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _load_data(args):
    if args.data is None:
        return None
    if not os.path.exists(args.data):
        raise ConfigError(f"dataset file not found: {args.data}")
    return read_dataset(args.data)


def _setup(args, need_data=False):
    """Load everything the command needs and validate it; nothing is written yet."""
    seed = resolve_seed(args.seed)
    data = _load_data(args)
    if need_data and data is None:
        raise ConfigError(f"{args.command} needs --data")
    shape = (data.sample_len, data.num_classes) if data is not None else None
    cfg = load_run_config(args.config, seed, shape)
    if args.jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    if args.supervised_only:
        cfg = replace(
            cfg,
            condition=DataCondition(cfg.condition.m_labeled_per_class, 0),
            train=replace(cfg.train, supervised_only=True),
        )
    return cfg, data


def _check_shape(arch, data):
    if arch.num_classes != data.num_classes:
        raise ShapeError(f"network has {arch.num_classes} classes but the dataset has {data.num_classes}")
    if arch.input_len != data.sample_len:
        raise ShapeError(f"network expects length {arch.input_len} but the dataset has {data.sample_len}")


def _prepared(cfg, data, condition):
    full = data if data is not None else simulate_dataset(cfg.sim)
    _check_shape(cfg.arch, full)
    return assign_condition(full, condition, cfg.sim.seed)


def _out_dir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args):
    cfg, _ = _setup(args)
    ds = simulate_dataset(cfg.sim)
    out = _out_dir(args)
    manifest = {
        "sim": cfg.sim.to_dict(),
        "profiles": [p.to_dict() for p in draw_profiles(cfg.sim.num_devices, cfg.sim.seed)],
        "seed": cfg.sim.seed,
    }
    write_dataset(ds, out / DATASET_FILE, manifest)
    print(f"wrote {out / DATASET_FILE}")
    for part in ("labeled", "val", "test"):
        counts = ds.class_counts(part)
        print(f"{part:8s} total {int(counts.sum()):6d}  per class {counts.tolist()}")
    return EXIT_OK


def cmd_train(args):
    cfg, data = _setup(args)
    ds = _prepared(cfg, data, cfg.condition)
    out = _out_dir(args)
    trainer = Trainer(ds, cfg.arch, cfg.train, verbose=not args.quiet)
    ps, report = trainer.run()
    if args.deterministic:
        report.wall_time = 0.0
    save_checkpoint(out / CHECKPOINT_FILE, ps, trainer.optimizer)
    doc = report.to_dict()
    doc["condition"] = str(cfg.condition)
    doc["arch"] = cfg.arch.to_dict()
    _write_json(out / REPORT_FILE, doc)
    print(f"best val {report.best_val_accuracy:.4f} (epoch {report.best_epoch})  test {report.test_accuracy:.4f}")
    return EXIT_OK


def cmd_eval(args):
    cfg, data = _setup(args, need_data=True)
    ckpt = args.checkpoint or str(Path(args.out) / CHECKPOINT_FILE)
    if not os.path.exists(ckpt):
        raise ConfigError(f"checkpoint not found: {ckpt}")
    ps, _ = load_checkpoint(ckpt)
    _check_shape(ps.arch, data)
    acc, confusion = evaluate(ps, data.test_x, data.test_y)
    out = _out_dir(args)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["true\\pred"] + list(range(data.num_classes)))
    for i, row in enumerate(confusion):
        w.writerow([i] + row.tolist())
    (out / CONFUSION_FILE).write_text(buf.getvalue(), encoding="utf-8")
    print(f"test accuracy {acc:.4f}")
    print(buf.getvalue(), end="")
    return EXIT_OK


def _cell_config(train_cfg, form, gamma, lam_by_form):
    lam = lam_by_form.get(form, train_cfg.lam)
    if gamma is None:
        return replace(train_cfg, form=form, lam=lam, ema_mode=EmaMode.OFF)
    mode = EmaMode.TRAIN_ON_EMA if train_cfg.ema_mode is EmaMode.OFF else train_cfg.ema_mode
    return replace(train_cfg, form=form, lam=lam, gamma=gamma, ema_mode=mode)


def run_bench(cfg, data=None, jobs=1, log=print):
    """Every (form, condition, gamma) cell of ``cfg.bench``; returns (rows, per-cell reports)."""
    full = data if data is not None else simulate_dataset(cfg.sim)
    _check_shape(cfg.arch, full)
    rows, runs = [], []
    for form, cond, gamma in cfg.bench.cells():
        row = {"form": form, "condition": cond, "gamma": "off" if gamma is None else f"{gamma:g}",
               "trials": cfg.bench.trials}
        try:
            ds = assign_condition(full, DataCondition.parse(cond), cfg.sim.seed)
            res = stability_trials(ds, cfg.arch, _cell_config(cfg.train, form, gamma, cfg.bench.lam_by_form),
                                   cfg.bench.trials, cfg.bench.good_threshold, jobs=jobs)
            accs = [r.test_accuracy for r in res.reports if r is not None]
            row.update(best_accuracy=f"{res.best_accuracy:.4f}",
                       median_accuracy=f"{statistics.median(accs):.4f}" if accs else "nan",
                       m=res.m, n=res.n, status="ok")
            runs.append({**row, "test_accuracies": accs,
                         "outcomes": [None if r is None else r.outcome for r in res.reports]})
        except SscsrError as exc:
            row.update(best_accuracy="nan", median_accuracy="nan", m=0, n=0,
                       status=f"failed: {type(exc).__name__}: {exc}")
            runs.append(dict(row))
        log(",".join(str(row[c]) for c in BENCH_COLUMNS))
        rows.append(row)
    return rows, runs


def cmd_bench(args):
    cfg, data = _setup(args)
    out = _out_dir(args)
    rows, runs = run_bench(cfg, data, jobs=args.jobs)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=BENCH_COLUMNS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    (out / BENCH_FILE).write_text(buf.getvalue(), encoding="utf-8")
    _write_json(out / BENCH_RUNS_FILE, runs)
    print(f"wrote {out / BENCH_FILE}")
    return EXIT_OK if all(r["status"] == "ok" for r in rows) else EXIT_FAIL


def cmd_plot_loss(args):
    cfg, _ = _setup(args)
    pc = cfg.plot
    grid, curves = scaled_ce_curves(pc.alphas, pc.num_classes, pc.points)
    out = _out_dir(args)
    (out / CURVES_CSV).write_text(curves_csv(grid, curves), encoding="utf-8")
    svg = line_chart_svg(
        grid,
        {f"alpha = {a:g}": c for a, c in curves.items()},
        title=f"Scaled cross-entropy, p = q, C = {pc.num_classes}",
        xlabel="max probability",
        ylabel="loss",
    )
    (out / CURVES_SVG).write_text(svg, encoding="utf-8")
    print(f"wrote {out / CURVES_CSV} and {out / CURVES_SVG}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "eval": cmd_eval,
    "bench": cmd_bench,
    "plot-loss": cmd_plot_loss,
}


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ShapeError) as exc:
        print(f"sscsr: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FormatError as exc:
        print(f"sscsr: format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except TrainingDivergence as exc:
        print(f"sscsr: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (SscsrError, OSError) as exc:
        print(f"sscsr: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
