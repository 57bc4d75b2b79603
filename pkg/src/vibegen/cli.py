"""Command-line entry point: ``vibegen {train,generate,evaluate,gradcheck,synth-data}``.

Exit codes: 0 success, 1 usage/configuration/IO error, 2 numerical divergence.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import config as C
from .checkpoint import load_checkpoint
from .data import WINDOW, load_signal, sample_windows, synth_signal, write_signal
from .errors import TrainingDivergenceError, VibeGenError
from .evaluation import evaluate, write_report
from .gradcheck import run_suite
from .model import GanModel, generate
from .training import train

GRADCHECK_TOLERANCE = 1e-4
# values reported for the benchmark record, for the comparison report
REFERENCE = {"final_epoch_fid": 0.0013, "initial_epoch_fid": 0.0503, "min_score": 0.00002, "max_score": 0.00387}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _threads() -> int:
    raw = os.environ.get("VIBEGEN_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"VIBEGEN_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise UsageError("VIBEGEN_THREADS must be >= 0")
    return n


def _thread_context():
    n = _threads()
    return threadpool_limits(limits=n or 1)


def _values(args, keys) -> dict:
    file_values = C.load_config(args.config) if getattr(args, "config", None) else {}
    flags = {k: getattr(args, k, None) for k in keys}
    return C.merge(file_values, flags)


def _require(args, values: dict, *keys):
    missing = [k for k in keys if values.get(k) is None]
    if missing:
        names = ", ".join("--" + k.replace("_", "-") for k in missing)
        raise UsageError(f"missing required option(s): {names}\n{args.usage}")


def _write_resolved(out: Path, command: str, values: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved_config.txt").write_text(f"# vibegen {command}\n" + C.format_config(values), encoding="utf-8")


# ----------------------------------------------------------------- commands

TRAIN_FLAGS = [
    ("--lr", "learning_rate", float), ("--epochs", "epochs", int), ("--batch-size", "batch_size", int),
    ("--critic-iters", "critic_iters_per_gen", int), ("--clip", "clip_value", float),
    ("--dropout", "dropout_rate", float), ("--noise-fraction", "noise_sigma0_fraction", float),
    ("--beta1", "beta1", float), ("--beta2", "beta2", float), ("--weight-decay", "weight_decay", float),
    ("--eps", "eps", float), ("--eval-samples", "eval_samples_per_epoch", int),
    ("--windows-per-epoch", "windows_per_epoch", int), ("--keep-checkpoints", "keep_checkpoints", int),
    ("--seed", "seed", int),
]


def cmd_train(args) -> int:
    keys = [dest for _, dest, _ in TRAIN_FLAGS] + ["data", "out", "resume", "precision"]
    values = _values(args, keys)
    _require(args, values, "data", "out")
    values["deterministic"] = _threads() == 0
    cfg = C.train_config(values)
    precision = values.get("precision") or 32
    if precision not in (32, 64):
        raise UsageError("--precision must be 32 or 64")
    dtype = np.float32 if precision == 32 else np.float64
    ds = load_signal(values["data"])
    out = Path(values["out"])
    _write_resolved(out, "train", values)
    if values.get("resume"):
        model = load_checkpoint(values["resume"], dtype)
    else:
        model = GanModel.create(cfg.seed, dtype)
    with _thread_context():
        history = train(model, ds, cfg, out_dir=out)
    last = history.records[-1] if history.records else None
    if last is not None:
        print(f"trained to epoch {last.epoch}: critic {last.critic_loss:.6g}  gen {last.gen_loss:.6g}  fid {last.fid:.6g}")
    return 0


def cmd_generate(args) -> int:
    values = _values(args, ["checkpoint", "count", "seed", "out"])
    _require(args, values, "checkpoint", "out")
    count = values.get("count", 1)
    if count < 1:
        raise UsageError("--count must be >= 1")
    model = load_checkpoint(values["checkpoint"])
    out = Path(values["out"])
    _write_resolved(out, "generate", values)
    with _thread_context():
        fakes = generate(model, count, np.random.default_rng(values.get("seed") or 0))[:, 0, :]
    write_windows_csv(fakes, out / "generated.csv")
    (out / "generated.f32").write_bytes(fakes.astype("<f4").tobytes())
    print(f"wrote {count} x {fakes.shape[1]} samples to {out}")
    return 0


def write_windows_csv(windows: np.ndarray, path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in windows:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_windows(path) -> np.ndarray:
    """(N, WINDOW) array from a CSV of rows or a raw .f32/.f64 file of N*WINDOW values."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        rows = [
            [float(v) for v in line.split(",")]
            for line in path.read_text(encoding="utf-8").splitlines() if line.strip()
        ]
        arr = np.asarray(rows, dtype=np.float64)
    else:
        arr = load_signal(path).samples.astype(np.float64)
    if arr.size == 0 or arr.size % WINDOW:
        raise VibeGenError(f"{path}: expected a whole number of {WINDOW}-sample windows")
    return arr.reshape(-1, WINDOW)


def _final_train_fid(values: dict):
    path = values.get("train_log")
    if path is None:
        guess = Path(values["checkpoint"]).parent / "train_log.csv"
        path = guess if guess.exists() else None
    if path is None:
        return None, None
    lines = Path(path).read_text(encoding="utf-8").splitlines()[1:]
    if not lines:
        return None, None
    fids = [float(l.split(",")[3]) for l in lines]
    return fids[0], fids[-1]


def cmd_evaluate(args) -> int:
    values = _values(args, ["checkpoint", "data", "real_windows", "num", "seed", "out", "bins", "train_log"])
    _require(args, values, "checkpoint", "out")
    if (values.get("data") is None) == (values.get("real_windows") is None):
        raise UsageError("give exactly one of --data or --real-windows")
    num = values.get("num", 256)
    if num < 1:
        raise UsageError("--num must be >= 1")
    model = load_checkpoint(values["checkpoint"])
    rng = np.random.default_rng(values.get("seed") or 0)
    out = Path(values["out"])
    _write_resolved(out, "evaluate", values)
    with _thread_context():
        fake = generate(model, num, rng)[:, 0, :].astype(np.float64)
    if values.get("real_windows"):
        real = read_windows(values["real_windows"])
    else:
        real = sample_windows(load_signal(values["data"]), num, rng).tensor[:, 0, :].astype(np.float64)
    report = evaluate(real, fake, bins=values.get("bins", 100))
    write_report(report, real, fake, out)

    first_fid, final_fid = _final_train_fid(values)
    rows = [
        ("min_score", report.min, REFERENCE["min_score"]),
        ("max_score", report.max, REFERENCE["max_score"]),
        ("final_epoch_fid", final_fid, REFERENCE["final_epoch_fid"]),
        ("initial_epoch_fid", first_fid, REFERENCE["initial_epoch_fid"]),
    ]
    with open(out / "comparison.txt", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# stochastic reference values from the benchmark record; no tolerance implied\n")
        fh.write("quantity,this_run,reference\n")
        for name, ours, ref in rows:
            fh.write(f"{name},{'' if ours is None else repr(float(ours))},{ref!r}\n")
    print(f"scores: {report.scores.size}  min {report.min:.6g}  max {report.max:.6g}  mean {report.mean:.6g}")
    for label, (i, j) in report.exemplars.items():
        print(f"{label:>6}: real {i}  fake {j}  score {report.scores[i, j]:.6g}")
    return 0


def cmd_gradcheck(args) -> int:
    values = _values(args, ["seed", "h"])
    with threadpool_limits(limits=1):
        errors = run_suite(seed=values.get("seed") or 0, h=values.get("h") or 1e-6)
    ok = True
    for name, err in errors.items():
        passed = err < GRADCHECK_TOLERANCE
        ok &= passed
        print(f"{name:<18} max rel err {err:.3e}  {'ok' if passed else 'FAIL'}")
    return 0 if ok else 2


def cmd_synth_data(args) -> int:
    values = _values(args, ["samples", "seed", "out"])
    _require(args, values, "out")
    samples = values.get("samples", 262_144)
    if samples < 1:
        raise UsageError("--samples must be >= 1")
    path = Path(values["out"])
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    write_signal(synth_signal(samples, values.get("seed") or 0), path, fmt="f32le")
    print(f"wrote {samples} samples to {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vibegen", description="1-D Wasserstein DCGAN for vibration windows")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p):
        p.add_argument("--config", help="key = value file; flags override it")
        p.add_argument("--seed", type=int)
        p.set_defaults(usage=p.format_usage())

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--data")
    p.add_argument("--out")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--precision", type=int, choices=(32, 64))
    for flag, dest, typ in TRAIN_FLAGS:
        if flag != "--seed":
            p.add_argument(flag, dest=dest, type=typ)
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="sample windows from a checkpoint")
    p.add_argument("--checkpoint")
    p.add_argument("--count", type=int)
    p.add_argument("--out")
    common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="pairwise score matrix, histogram, exemplars, box stats")
    p.add_argument("--checkpoint")
    p.add_argument("--data")
    p.add_argument("--real-windows", dest="real_windows", help="explicit real windows instead of sampling --data")
    p.add_argument("--num", type=int)
    p.add_argument("--bins", type=int)
    p.add_argument("--train-log", dest="train_log")
    p.add_argument("--out")
    common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gradcheck", help="finite-difference check of every layer")
    p.add_argument("--h", type=float)
    common(p)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("synth-data", help="write a seeded synthetic record (.f32)")
    p.add_argument("--samples", type=int)
    p.add_argument("--out")
    common(p)
    p.set_defaults(func=cmd_synth_data)
    return parser


def main(argv=None) -> int:
    try:
        parser = build_parser()
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage())
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
        return args.func(args)
    except UsageError as exc:
        print(str(exc).rstrip(), file=sys.stderr)
        return 1
    except TrainingDivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (VibeGenError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
