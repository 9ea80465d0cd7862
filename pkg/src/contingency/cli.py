"""Command-line interface: ``contingency {augment,experiment,train,predict}``.

Exit status: 0 on success, 1 on runtime or data failures, 2 on bad
arguments (including malformed augmentation settings).
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from contingency import __version__, model
from contingency.augment import SpecError, build_contingency_dataset, encode_plain, format_spec, parse_spec
from contingency.data import DatasetError, inject_irrelevant_variables, load_csv, minmax_apply, minmax_fit
from contingency.experiment import DESK_MAX_ITERATIONS, TrialConfig, run_experiment
from contingency.model import Loss, MlpConfig, ModelFormatError, SavedModel, TrainingError
from contingency.rng import spawn

log = logging.getLogger("contingency")

# Built-in defaults; a --config JSON file overrides them and flags override both.
DEFAULTS = {
    "label_col": "-1",
    "drop_cols": "",
    "spec": None,
    "prob_override": None,
    "irrelevant": 0,
    "trials": 100,
    "split": 0.75,
    "seed": None,
    "jobs": 1,
    "hidden": 15,
    "decay": 1e-4,
    "max_iter": DESK_MAX_ITERATIONS,
    "stall_iter": 20,
    "loss": "sse",
    "scale": False,
}

# Per-run paths: accepted from a config or manifest file but not defaulted.
PATH_KEYS = ("data", "out", "csv_out", "model")

REQUIRED = {
    "augment": ("data", "out"),
    "experiment": ("data", "out"),
    "train": ("data", "out"),
    "predict": ("model", "data"),
}


class UsageError(Exception):
    """Invalid argument combination; maps to exit status 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _add_data_flags(p):
    p.add_argument("--data", help="input CSV file (required)")
    p.add_argument("--label-col", help="label column name or index (default: last column)")
    p.add_argument("--drop-cols", help="comma-separated column names or indices to drop")
    p.add_argument("--irrelevant", type=int, help="number of irrelevant Unif(0, alpha) columns to append")
    p.add_argument("--scale", action="store_true", default=None, help="min-max scale features to [0, 1]")
    p.add_argument("--config", help="JSON file with values for any flag, or a manifest from an earlier run")


def _add_spec_flags(p):
    p.add_argument("--spec", help="augmentation setting, e.g. 10A/0I/0.1")
    p.add_argument("--prob-override", type=float, help="replace the prob part of --spec")
    p.add_argument("--seed", type=int)


def _add_mlp_flags(p):
    p.add_argument("--hidden", type=int)
    p.add_argument("--decay", type=float)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--stall-iter", type=int, help="stop after this many consecutive iterations of negligible decrease")
    p.add_argument("--loss", choices=["sse", "xent"])


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="contingency", description="Contingency training with a BFGS-trained MLP.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("augment", help="write a contingency-training dataset as CSV")
    _add_data_flags(p)
    _add_spec_flags(p)
    p.add_argument("--out", help="output CSV (required)")

    p = sub.add_parser("experiment", help="paired usual vs. contingency trials")
    _add_data_flags(p)
    _add_spec_flags(p)
    _add_mlp_flags(p)
    p.add_argument("--trials", type=int)
    p.add_argument("--split", type=float, help="training fraction (default 0.75)")
    p.add_argument("--jobs", type=int, help="parallel trial workers")
    p.add_argument("--out", help="JSON report path (required)")
    p.add_argument("--csv-out", help="optional per-trial CSV")

    p = sub.add_parser("train", help="train one model (contingency-trained when --spec is given)")
    _add_data_flags(p)
    _add_spec_flags(p)
    _add_mlp_flags(p)
    p.add_argument("--out", help="model file path (required)")

    p = sub.add_parser("predict", help="predict class indices with a saved model")
    p.add_argument("--model", help="model file written by train (required)")
    p.add_argument("--data", help="CSV of feature rows (required)")
    p.add_argument("--config", help="JSON file with values for any flag, or a manifest from an earlier run")
    p.add_argument("--label-col", help="label column; when given, accuracy is printed")
    p.add_argument("--drop-cols")
    p.add_argument("--out", help="write predictions here instead of stdout")
    return ap


def _read_config(path: str, command: str) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read config file: {exc}") from exc
    if not isinstance(doc, dict):
        raise UsageError("config file must hold a JSON object")
    if "options" in doc and "command" in doc:  # a run manifest
        if doc["command"] != command:
            raise UsageError(f"manifest is for {doc['command']!r}, not {command!r}")
        doc = {k: v for k, v in doc["options"].items() if k != "config"}
    unknown = set(doc) - set(DEFAULTS) - set(PATH_KEYS)
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    return doc


def resolve(args: argparse.Namespace) -> dict:
    """Merge built-in defaults < config file < explicit flags."""
    # predict has no label column unless one is named
    opts = dict(DEFAULTS) if args.command != "predict" else {}
    if getattr(args, "config", None):
        opts.update(_read_config(args.config, args.command))
    for key, value in vars(args).items():
        if value is not None:
            opts[key] = value
    missing = [k for k in REQUIRED[args.command] if opts.get(k) is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))
    return opts


def _columns(text) -> list:
    if text in (None, ""):
        return []
    if isinstance(text, list):
        return text
    return [c.strip() for c in str(text).split(",") if c.strip()]


def _spec(opts, required=True):
    if opts.get("spec") is None:
        if required:
            raise UsageError("--spec is required")
        return None
    try:
        spec = parse_spec(opts["spec"])
        if opts.get("prob_override") is not None:
            spec = type(spec)(spec.r_a, spec.r_i, float(opts["prob_override"]))
    except SpecError as exc:
        raise UsageError(str(exc)) from exc
    return spec


def _seed(opts):
    if opts.get("seed") is None:
        raise UsageError("--seed is required")
    return int(opts["seed"])


def _load(opts):
    label = opts["label_col"]
    label = int(label) if str(label).lstrip("-").isdigit() else label
    return load_csv(opts["data"], label_col=label, drop_cols=_columns(opts["drop_cols"]))


def manifest(command: str, opts: dict, config: Optional[dict] = None) -> dict:
    """Resolved options plus version and time; ``config`` is the echo written into the report."""
    man = {
        "command": command,
        "options": {k: v for k, v in sorted(opts.items()) if k not in ("command", "verbose")},
        "version": __version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    if config is not None:
        man["config"] = config
    return man


def _write_manifest(out: Optional[str], man: dict) -> None:
    if out:
        Path(f"{out}.manifest.json").write_text(json.dumps(man, indent=2, sort_keys=True) + "\n")
    print(json.dumps(man, sort_keys=True), file=sys.stderr)


def cmd_augment(opts: dict) -> int:
    spec = _spec(opts)
    gens = spawn(_seed(opts), 2)
    d = _load(opts)
    if opts["irrelevant"]:
        d = inject_irrelevant_variables(d, int(opts["irrelevant"]), gens[0])
    if opts["scale"]:
        d = minmax_apply(d, *minmax_fit(d))
    enc = build_contingency_dataset(d, spec, gens[1])
    enc.to_csv(opts["out"])
    _write_manifest(opts["out"], manifest("augment", opts))
    print(f"wrote {opts['out']}: {len(enc)} rows, {2 * enc.nv + 1} columns ({format_spec(spec)}, nv={enc.nv})")
    return 0


def _check_mlp_opts(opts):
    if min(int(opts["hidden"]), int(opts["max_iter"]), int(opts["stall_iter"])) < 1 or float(opts["decay"]) < 0:
        raise UsageError("--hidden, --max-iter and --stall-iter must be >= 1 and --decay >= 0")
    if not 0 < float(opts["split"]) < 1:
        raise UsageError("--split must be in (0, 1)")
    if int(opts["irrelevant"]) < 0:
        raise UsageError("--irrelevant must be >= 0")


def cmd_experiment(opts: dict) -> int:
    spec = _spec(opts)
    seed = _seed(opts)
    if int(opts["trials"]) < 1:
        raise UsageError("--trials must be >= 1")
    if int(opts["jobs"]) < 1:
        raise UsageError("--jobs must be >= 1")
    _check_mlp_opts(opts)
    d = _load(opts)
    cfg = TrialConfig(
        dataset_id=Path(opts["data"]).stem,
        spec=spec,
        n_trials=int(opts["trials"]),
        train_fraction=float(opts["split"]),
        irrelevant_count=int(opts["irrelevant"]),
        master_seed=seed,
        n_hidden=int(opts["hidden"]),
        weight_decay=float(opts["decay"]),
        max_iterations=int(opts["max_iter"]),
        stall_iterations=int(opts["stall_iter"]),
        loss=opts["loss"],
        scale=bool(opts["scale"]),
    )
    report = run_experiment(d, cfg, jobs=int(opts["jobs"]))
    report.write_json(opts["out"])
    if opts.get("csv_out"):
        report.write_csv(opts["csv_out"])
    _write_manifest(opts["out"], manifest("experiment", opts, cfg.echo()))
    if report.n_failed:
        print(f"warning: {report.n_failed} of {cfg.n_trials} trials failed", file=sys.stderr)
    print(f"median usual:       {report.usual.median:.4f}")
    print(f"median contingency: {report.contingency.median:.4f}")
    print(f"median improvement: {report.median_improvement:+.4f}")
    return 0


def cmd_train(opts: dict) -> int:
    spec = _spec(opts, required=False)
    _check_mlp_opts(opts)
    g_inject, g_aug, g_init = spawn(_seed(opts), 3)
    d = _load(opts)
    if opts["irrelevant"]:
        d = inject_irrelevant_variables(d, int(opts["irrelevant"]), g_inject)
    scaling = minmax_fit(d) if opts["scale"] else None
    if scaling is not None:
        d = minmax_apply(d, *scaling)
    if spec is None:
        x, y = d.features, d.labels
    else:
        enc = build_contingency_dataset(d, spec, g_aug)
        x, y = enc.inputs, enc.labels
    cfg = MlpConfig(
        n_inputs=x.shape[1],
        n_outputs=d.n_classes,
        n_hidden=int(opts["hidden"]),
        weight_decay=float(opts["decay"]),
        max_iterations=int(opts["max_iter"]),
        stall_iterations=int(opts["stall_iter"]),
        loss=opts["loss"],
    )
    outcome = model.train_bfgs(cfg, x, y, g_init)
    saved = SavedModel(outcome.parameters, cfg.loss, spec is not None, d.class_names, scaling)
    model.save_model(saved, opts["out"])
    _write_manifest(opts["out"], manifest("train", opts))
    x_eval = encode_plain(d).inputs if spec is not None else d.features
    acc = model.accuracy(outcome.parameters, x_eval, d.labels)
    print(
        f"wrote {opts['out']}: {outcome.iterations} iterations, {outcome.termination.value}, "
        f"objective {outcome.final_objective:.6g}, training accuracy {acc:.4f}"
    )
    return 0


def _read_feature_rows(path, drop, label_col):
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise DatasetError(f"{path} is empty")

    def numeric(c):
        try:
            float(c)
            return True
        except ValueError:
            return False

    width = len(rows[0])
    header = rows[0] if not all(numeric(c) for j, c in enumerate(rows[0]) if j != label_col) else None
    body = rows[1:] if header else rows

    def idx(ref):
        if str(ref).lstrip("-").isdigit():
            return int(ref) % width
        if header is None or ref not in header:
            raise DatasetError(f"column {ref!r} not found")
        return header.index(ref)

    lab = idx(label_col) if label_col is not None else None
    dropped = {idx(c) for c in drop}
    keep = [j for j in range(width) if j != lab and j not in dropped]
    try:
        x = np.array([[float(r[j]) for j in keep] for r in body])
    except (ValueError, IndexError) as exc:
        raise DatasetError(f"{path}: bad feature cell: {exc}") from exc
    labels = [r[lab].strip() for r in body] if lab is not None else None
    return x, labels


def cmd_predict(opts: dict) -> int:
    saved = model.load_model(opts["model"])
    label_col = opts.get("label_col")
    if label_col is not None and str(label_col).lstrip("-").isdigit():
        label_col = int(label_col)
    x, raw_labels = _read_feature_rows(opts["data"], _columns(opts.get("drop_cols")), label_col)
    nv = saved.parameters.n_inputs // 2 if saved.masked else saved.parameters.n_inputs
    if x.ndim != 2 or x.shape[1] != nv:
        width = x.shape[1] if x.ndim == 2 else 0
        raise DatasetError(f"dimension mismatch: data has {width} feature columns, model expects {nv}")
    if saved.scaling is not None:
        lo, span = saved.scaling
        x = (x - lo) / span
    if saved.masked:
        x = np.hstack([x, np.ones_like(x)])
    pred = model.predict(saved.parameters, x)
    _write_manifest(opts.get("out"), manifest("predict", opts))
    lines = "\n".join(str(int(c)) for c in pred) + "\n"
    if opts.get("out"):
        Path(opts["out"]).write_text(lines)
    else:
        sys.stdout.write(lines)
    if raw_labels is not None:
        names = list(saved.class_names or [])
        index = {v: k for k, v in enumerate(names)}
        try:
            y = np.array([index[v] if names else int(v) for v in raw_labels])
        except (KeyError, ValueError) as exc:
            raise DatasetError(f"unknown label {exc} for this model") from exc
        print(f"accuracy {float(np.mean(pred == y)):.4f}", file=sys.stderr if not opts.get("out") else sys.stdout)
    return 0


COMMANDS = {
    "augment": cmd_augment,
    "experiment": cmd_experiment,
    "train": cmd_train,
    "predict": cmd_predict,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
        opts = resolve(args)
        return COMMANDS[args.command](opts)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except (DatasetError, ModelFormatError, TrainingError, OSError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
