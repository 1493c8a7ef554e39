"""Command-line front end: synthesize data, train, evaluate, run the theory
checks, and inspect files.

Exit codes: 0 success, 1 usage error, 2 data/file error, 3 numerical
failure (diverged training or a violated theory bound). Every command
writes a run manifest JSON capturing the exact invocation, input hashes,
outputs, seed, and wall-clock time, so any run can be reproduced from its
manifest alone.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import struct
import sys
import time
from pathlib import Path

from . import dataio, metrics, theory, trainer

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems with exit code 1."""

    def error(self, message):
        raise _UsageError(message)


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_run_manifest(out_dir, command, args_echo, inputs, outputs, seed, started):
    args_echo = {k: v for k, v in args_echo.items() if k != "func"}
    doc = {
        "command": command,
        "args": args_echo,
        "inputs": {str(p): _sha256(p) for p in inputs if Path(p).exists()},
        "outputs": [str(p) for p in outputs],
        "seed": seed,
        "wall_clock_sec": round(time.monotonic() - started, 3),
    }
    path = Path(out_dir) / f"run_{command}.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def cmd_synth(args):
    started = time.monotonic()
    dims = [int(d) for d in args.dims.split(",") if d]
    if len(dims) != args.views:
        raise _UsageError(
            f"--dims lists {len(dims)} dimensions for --views {args.views}"
        )
    spec = dataio.SyntheticSpec(
        n_clusters=args.clusters, n_views=args.views, n_samples=args.samples,
        dims=dims, separation=args.separation, seed=args.seed,
    )
    ds = dataio.generate_synthetic(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    view_paths = []
    for view in ds.views:
        p = out / f"view_{view.view_id}.mvfv"
        dataio.write_view(view, p)
        view_paths.append(p)
    label_path = out / "labels.mvlb"
    dataio.write_labels(ds.labels, label_path)
    manifest = dataio.write_manifest(ds, out, view_paths, label_path)
    _write_run_manifest(
        out, "synth", vars(args) | {"dims": dims}, [],
        view_paths + [label_path, manifest], args.seed, started,
    )
    print(f"wrote {len(view_paths)} views, labels, manifest under {out}")
    return EXIT_OK


def cmd_train(args):
    started = time.monotonic()
    ds = dataio.load_manifest(args.manifest)
    config = trainer.TrainConfig(
        alpha=args.alpha, beta=args.beta, lr=args.lr,
        batch_size=args.batch_size, epochs=args.epochs, seed=args.seed,
        dropout_rate=args.dropout, row_normalize=args.row_normalize,
    )
    ckpt = trainer.train(ds, args.clusters, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt_path = out / "checkpoint.mvck"
    trainer.save_checkpoint(ckpt, ckpt_path)
    trace_path = out / "loss_trace.csv"
    with open(trace_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "L_s", "L_a", "L_c", "total"])
        for epoch, row in enumerate(ckpt.loss_trace):
            writer.writerow([epoch] + [f"{v:.12g}" for v in row])
    inputs = [args.manifest] + [
        Path(args.manifest).parent / e["path"]
        for e in json.loads(Path(args.manifest).read_text())["views"]
    ]
    _write_run_manifest(
        out, "train", vars(args), inputs, [ckpt_path, trace_path],
        args.seed, started,
    )
    first, last = ckpt.loss_trace[0][3], ckpt.loss_trace[-1][3]
    print(f"trained {config.epochs} epochs; total loss {first:.6f} -> {last:.6f}")
    print(f"checkpoint: {ckpt_path}")
    return EXIT_OK


def cmd_eval(args):
    started = time.monotonic()
    ckpt = trainer.load_checkpoint(args.checkpoint)
    ds = dataio.load_manifest(args.manifest)
    labels = ds.labels
    if args.labels:
        labels = dataio.read_labels(args.labels)
        if labels.shape[0] != ds.n:
            raise dataio.AlignmentError(
                f"labels file has {labels.shape[0]} entries, dataset has {ds.n}"
            )
    pred, dist = trainer.predict(ckpt, ds, args.batch_size)
    out = Path(args.out) if args.out else Path(args.checkpoint).parent
    out.mkdir(parents=True, exist_ok=True)
    pred_path = out / "predictions.csv"
    with open(pred_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["index", "label"] + [
            f"p{j}" for j in range(dist.shape[1])
        ])
        for i, (lab, row) in enumerate(zip(pred, dist)):
            writer.writerow([i, lab] + [f"{v:.8g}" for v in row])
    outputs = [pred_path]
    if labels is not None:
        rows = metrics.metrics_report(pred, labels)
        metrics_path = out / "metrics.csv"
        with open(metrics_path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["metric", "value"])
            writer.writerows((name, f"{value:.6f}") for name, value in rows)
        outputs.append(metrics_path)
        width = max(len(name) for name, _ in rows)
        for name, value in rows:
            print(f"{name:<{width}}  {value:.4f}")
    else:
        print("no labels available; wrote predictions only")
    if args.batch_sensitivity:
        rate = trainer.prediction_flip_rate(
            ckpt, ds, args.batch_size, seed=ckpt.config.seed
        )
        print(f"batch-composition label flip rate: {rate:.4f}")
    inputs = [args.checkpoint, args.manifest]
    if args.labels:
        inputs.append(args.labels)
    _write_run_manifest(
        out, "eval", vars(args), inputs, outputs, ckpt.config.seed, started,
    )
    return EXIT_OK


def cmd_check(args):
    started = time.monotonic()
    scale = float(os.environ.get("MSRL_QDELTA_SCALE", "1.0"))
    report = theory.run_all_checks(
        seed=args.seed, trials=args.trials, qdelta_scale=scale
    )
    header = f"{'check':<26} {'trials':>8} {'bound':>12} {'violation':>13}  pass"
    print(header)
    print("-" * len(header))
    for name, trials, bound, viol, passed, detail in report.rows():
        print(f"{name:<26} {trials:>8} {bound:>12.3e} {viol:>13.5e}  "
              f"{'ok' if passed else 'FAIL'}  ({detail})")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / "theory_report.csv"
        with open(csv_path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(
                ["check", "trials", "bound", "max_violation", "passed", "detail"]
            )
            writer.writerows(report.rows())
        _write_run_manifest(
            out, "check", vars(args), [], [csv_path], args.seed, started,
        )
    if not report.all_passed:
        failing = [e.name for e in report.entries if not e.passed]
        print(f"FAILED checks: {', '.join(failing)}", file=sys.stderr)
        return EXIT_NUMERIC
    print("all theory checks passed")
    return EXIT_OK


def _describe_file(path):
    raw = open(path, "rb").read(24)
    if raw[:4] == dataio.VIEW_MAGIC:
        version, n, dim, dtype = struct.unpack("<IQII", raw[4:24])
        return (f"MVFV view: version {version}, n={n}, dim={dim}, "
                f"dtype={'f32' if dtype == 0 else 'f64'}")
    if raw[:4] == dataio.LABEL_MAGIC:
        version, n = struct.unpack("<IQ", raw[4:16])
        return f"MVLB labels: version {version}, n={n}"
    if raw[:4] == trainer.CHECKPOINT_MAGIC:
        ckpt = trainer.load_checkpoint(path)
        dims = [m.n_features for m in ckpt.models]
        return (f"checkpoint: {len(ckpt.models)} views dims={dims}, "
                f"C={ckpt.n_clusters}, epoch {ckpt.epoch}, seed "
                f"{ckpt.config.seed}")
    try:
        doc = json.loads(Path(path).read_text())
        if "views" in doc:
            return (f"manifest: {len(doc['views'])} views, labels="
                    f"{doc.get('labels')}, clusters={doc.get('clusters')}")
    except (json.JSONDecodeError, UnicodeDecodeError):
        pass
    raise dataio.FileFormatError(f"{path}: not a recognized msrl file")


def cmd_inspect(args):
    for path in args.paths:
        print(f"{path}: {_describe_file(path)}")
    return EXIT_OK


def build_parser():
    parser = _Parser(prog="msrl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic multiview dataset")
    p.add_argument("--clusters", type=int, required=True)
    p.add_argument("--views", type=int, required=True)
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--dims", required=True,
                   help="comma-separated feature dimension per view")
    p.add_argument("--separation", type=float, default=6.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train on a dataset manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--clusters", type=int, required=True)
    p.add_argument("--alpha", type=float, default=5.0)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=500)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dropout", type=float, default=0.1)
    p.add_argument("--row-normalize", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="predict and score a trained checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--labels", help="override ground-truth labels file")
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--batch-sensitivity", action="store_true",
                   help="also report the label flip rate across batch compositions")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("check", help="run the theory verification suite")
    p.add_argument("--trials", type=int, default=None,
                   help="override per-check trial counts")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("inspect", help="describe msrl binary/JSON files")
    p.add_argument("paths", nargs="+")
    p.set_defaults(func=cmd_inspect)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        code = args.func(args)
    except _UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        code = EXIT_USAGE
    except (dataio.FileFormatError, FileNotFoundError, ValueError) as e:
        print(f"data error: {e}", file=sys.stderr)
        code = EXIT_DATA
    except trainer.TrainingDivergedError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        code = EXIT_NUMERIC
    sys.exit(code)


if __name__ == "__main__":
    main()
