"""Command-line surface for the full pipeline.

Subcommands: preprocess, train, eval, params, compare, synth. Options
come from an optional JSON config file plus flags, with flags winning.
The seed resolves as: --seed flag, then the config file, then the
TCHGR_SEED environment variable, then 0.

Stream discipline: anything meant for humans goes to stderr; stdout
carries exactly one machine-readable key=value line per command.
Exit codes: 0 success, 2 config/validation problems, 3 numerical
failures, 4 file format or I/O problems.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, fields

import numpy as np

from . import data as dio
from . import signal as sig
from . import stats, train as tr
from .errors import (
    ConfigError,
    DataError,
    DimensionError,
    EmgTcnError,
    FormatError,
    NumericalError,
    RangeError,
    UsageError,
)
from .model import (
    BASELINE_RECURRENT_PARAMS,
    AttentionTcn,
    ModelConfig,
    count_parameters,
)

__all__ = ["main", "RunConfig"]

_VALIDATION_ERRORS = (ConfigError, DimensionError, RangeError, DataError, UsageError)


@dataclass
class RunConfig:
    """Merged file + flag settings, validated before any work starts."""

    window_ms: int = 200
    stride_ms: int | None = None
    num_patches: int = 10
    model_dim: int = 12
    kernel_size: int = 3
    num_classes: int = 17
    mu: float = 255.0
    cutoff_hz: float = 450.0
    sample_rate_hz: float = 2000.0
    batch_size: int = 32
    epochs: int = 10
    lr: float = 1e-4
    seed: int | None = None
    shuffle: bool = True
    train_repetitions: tuple = (1, 3, 4, 6)
    test_repetitions: tuple = (2, 5)

    def resolved_seed(self) -> int:
        if self.seed is not None:
            return self.seed
        env = os.environ.get("TCHGR_SEED")
        if env is not None:
            try:
                return int(env)
            except ValueError:
                raise ConfigError(
                    f"TCHGR_SEED must be an integer, got {env!r}"
                ) from None
        return 0

    def split_spec(self) -> dio.SplitSpec:
        return dio.SplitSpec(
            train_repetitions=frozenset(self.train_repetitions),
            test_repetitions=frozenset(self.test_repetitions),
        )

    def validate(self):
        """Check every cross-field precondition up front."""
        self.model_config(
            channels=1, seq_len=self._window_samples()
        )  # window/patch divisibility
        sig.FilterParams(cutoff_hz=self.cutoff_hz, sample_rate_hz=self.sample_rate_hz)
        sig.MuLawParams(mu=self.mu)
        self.split_spec()
        tr.TrainConfig(
            epochs=self.epochs, batch_size=self.batch_size, lr=self.lr,
            seed=0, shuffle=self.shuffle,
        )
        if self.stride_ms is not None and self.stride_ms < 1:
            raise ConfigError(f"stride_ms must be >= 1, got {self.stride_ms}")

    def _window_samples(self) -> int:
        n = self.window_ms * self.sample_rate_hz / 1000.0
        if abs(n - round(n)) > 1e-9 or n < 1:
            raise ConfigError(
                f"window of {self.window_ms} ms is not a whole number of samples "
                f"at {self.sample_rate_hz} Hz"
            )
        return int(round(n))

    def model_config(self, channels: int, seq_len: int) -> ModelConfig:
        if seq_len % self.num_patches != 0:
            raise ConfigError(
                f"window length {seq_len} is not divisible into "
                f"{self.num_patches} patches"
            )
        return ModelConfig(
            channels=channels,
            seq_len=seq_len,
            num_patches=self.num_patches,
            patch_len=seq_len // self.num_patches,
            model_dim=self.model_dim,
            kernel_size=self.kernel_size,
            num_classes=self.num_classes,
        )


def _load_run_config(args) -> RunConfig:
    cfg = RunConfig()
    known = {f.name for f in fields(RunConfig)}
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                loaded = json.load(fh)
        except json.JSONDecodeError as err:
            raise ConfigError(f"{args.config}: not valid JSON ({err})") from None
        if not isinstance(loaded, dict):
            raise ConfigError(f"{args.config}: top level must be an object")
        unknown = set(loaded) - known
        if unknown:
            raise ConfigError(
                f"{args.config}: unknown config keys {sorted(unknown)}"
            )
        for key, value in loaded.items():
            if key in ("train_repetitions", "test_repetitions"):
                value = tuple(int(v) for v in value)
            setattr(cfg, key, value)
    overrides = {
        "window_ms": "window_ms", "stride_ms": "stride_ms",
        "num_patches": "num_patches", "model_dim": "model_dim",
        "kernel_size": "kernel_size", "num_classes": "num_classes",
        "mu": "mu", "cutoff_hz": "cutoff_hz", "sample_rate_hz": "sample_rate_hz",
        "batch_size": "batch_size", "epochs": "epochs", "lr": "lr", "seed": "seed",
    }
    for arg_name, field_name in overrides.items():
        value = getattr(args, arg_name, None)
        if value is not None:
            setattr(cfg, field_name, value)
    for arg_name, field_name in (
        ("train_reps", "train_repetitions"),
        ("test_reps", "test_repetitions"),
    ):
        value = getattr(args, arg_name, None)
        if value is not None:
            setattr(cfg, field_name, _parse_rep_list(value))
    cfg.validate()
    return cfg


def _parse_rep_list(text: str) -> tuple:
    try:
        reps = tuple(int(v) for v in text.split(",") if v.strip() != "")
    except ValueError:
        raise ConfigError(f"repetition list must be integers, got {text!r}") from None
    return reps


def _note(msg: str):
    print(msg, file=sys.stderr)


def _emit(**pairs):
    print(" ".join(f"{k}={v}" for k, v in pairs.items()))


def _fmt(x: float) -> str:
    return repr(float(x))


# -- subcommands ---------------------------------------------------------


def _cmd_preprocess(args) -> int:
    cfg = _load_run_config(args)
    filt = sig.FilterParams(cutoff_hz=cfg.cutoff_hz, sample_rate_hz=cfg.sample_rate_hz)
    mu = sig.MuLawParams(mu=cfg.mu)
    parts = []
    for index, path in enumerate(args.inputs, start=1):
        rec = _read_any_recording(path, cfg, subject=index)
        processed = rec.with_data(sig.preprocess(rec.data, filt, mu))
        segs = sig.segment(
            processed, window_ms=cfg.window_ms, stride_ms=cfg.stride_ms,
            sample_rate_hz=rec.sample_rate_hz,
        )
        _note(f"{path}: {len(segs)} segments from subject {index}")
        parts.append(segs)
    combined = dio.concat_segments(parts)
    classes, counts = np.unique(combined.labels, return_counts=True)
    for cls, count in zip(classes, counts):
        _note(f"  class {cls}: {count} segments")
    dio.write_segments(args.out, combined)
    _emit(segments=args.out, count=len(combined), classes=len(classes))
    return 0


def _read_any_recording(path, cfg: RunConfig, subject: int) -> dio.Recording:
    if str(path).endswith(".csv"):
        return dio.read_annotated_csv(
            path, sample_rate_hz=cfg.sample_rate_hz, subject=subject
        )
    return dio.read_recording(path, subject=subject)


def _cmd_train(args) -> int:
    cfg = _load_run_config(args)
    seed = cfg.resolved_seed()
    segs = dio.read_segments(args.segments)
    train_set, _ = dio.split(segs, cfg.split_spec())
    if len(train_set) == 0:
        raise UsageError(
            f"no segments with repetitions {sorted(cfg.train_repetitions)} "
            f"in {args.segments}"
        )
    if int(train_set.labels.max()) >= cfg.num_classes:
        raise DataError(
            f"label {int(train_set.labels.max())} does not fit "
            f"{cfg.num_classes} classes"
        )
    model_cfg = cfg.model_config(
        channels=train_set.channels, seq_len=train_set.seg_len
    )
    model = AttentionTcn(model_cfg, seed=seed)
    _note(
        f"training on {len(train_set)} segments "
        f"(N={model_cfg.num_patches}, D={model_cfg.model_dim}, "
        f"Z={model_cfg.num_blocks}) for {cfg.epochs} epochs"
    )
    opt = tr.Adam(model.named_parameters(), lr=cfg.lr)
    result = tr.train(
        model, train_set,
        tr.TrainConfig(
            epochs=cfg.epochs, batch_size=cfg.batch_size, lr=cfg.lr,
            seed=seed, shuffle=cfg.shuffle,
        ),
        optimizer=opt,
    )
    tr.save_checkpoint(
        args.checkpoint,
        tr.make_checkpoint(model, opt, epoch=cfg.epochs, rng_state=result.rng_state),
    )
    tr.write_trace(args.trace, result)
    final_loss = result.losses[-1] if result.losses else float("nan")
    final_acc = result.accuracies[-1] if result.accuracies else float("nan")
    _emit(
        checkpoint=args.checkpoint, trace=args.trace,
        final_loss=_fmt(final_loss), final_train_acc=_fmt(final_acc),
    )
    return 0


def _cmd_eval(args) -> int:
    cfg = _load_run_config(args)
    ckpt = tr.load_checkpoint(args.checkpoint)
    model = tr.restore_model(ckpt)
    segs = dio.read_segments(args.segments)
    _, test_set = dio.split(segs, cfg.split_spec())
    if len(test_set) == 0:
        raise UsageError(
            f"no segments with repetitions {sorted(cfg.test_repetitions)} "
            f"in {args.segments}"
        )
    want = (model.cfg.channels, model.cfg.seq_len)
    have = tuple(test_set.data.shape[1:])
    if have != want:
        raise DimensionError(
            f"checkpoint expects segments of {want}, file holds {have}"
        )
    model_id = args.model_id or _stem(args.checkpoint)
    per_subject = {}
    for subject in np.unique(test_set.subjects):
        mask = test_set.subjects == subject
        preds = _predict(model, test_set.data[mask])
        per_subject[int(subject)] = stats.accuracy(
            preds, test_set.labels[mask]
        )
    report = stats.aggregate(per_subject, model_id=model_id)
    paths = stats.emit_report(report, [], args.out_dir)
    for subject in sorted(per_subject):
        _note(f"subject {subject}: accuracy {per_subject[subject]:.4f}")
    _emit(
        per_subject=paths["per_subject"], summary=paths["summary"],
        mean=_fmt(report.mean), std=_fmt(report.std),
    )
    return 0


def _predict(model: AttentionTcn, windows: np.ndarray, chunk: int = 256) -> np.ndarray:
    preds = []
    for lo in range(0, windows.shape[0], chunk):
        logits = model.forward(windows[lo : lo + chunk]).data
        preds.append(np.argmax(logits, axis=1))
    return np.concatenate(preds)


def _cmd_params(args) -> int:
    cfg = _load_run_config(args)
    channels = args.channels if args.channels is not None else 12
    model_cfg = cfg.model_config(channels=channels, seq_len=cfg._window_samples())
    model = AttentionTcn(model_cfg, seed=0)
    total, breakdown = count_parameters(model)
    _note(
        f"architecture: window {cfg.window_ms} ms, N={model_cfg.num_patches}, "
        f"D={model_cfg.model_dim}, Z={model_cfg.num_blocks}, "
        f"dilations {list(model_cfg.dilations)}"
    )
    for stage, count in breakdown.items():
        _note(f"  {stage:<10} {count:>8}")
    _note(f"  {'total':<10} {total:>8}")
    ratio = BASELINE_RECURRENT_PARAMS / total
    _note(
        f"reference recurrent baseline is {BASELINE_RECURRENT_PARAMS} parameters "
        f"({ratio:.1f}x this model)"
    )
    _emit(
        embedding=breakdown["embedding"], attention=breakdown["attention"],
        blocks=breakdown["blocks"], classifier=breakdown["classifier"],
        total=total, baseline=BASELINE_RECURRENT_PARAMS, ratio=_fmt(ratio),
    )
    return 0


def _cmd_compare(args) -> int:
    if len(args.reports) < 2:
        raise UsageError("need at least two per-subject reports to compare")
    names = [_stem(p, strip="_per_subject") for p in args.reports]
    reports = [stats.read_per_subject(p) for p in args.reports]
    base_name, base = names[0], reports[0]
    base_subjects = set(base)
    for name, rep, path in zip(names[1:], reports[1:], args.reports[1:]):
        if set(rep) != base_subjects:
            missing = sorted(base_subjects ^ set(rep))
            raise UsageError(
                f"{path}: subject set differs from {args.reports[0]} "
                f"(mismatched subjects: {missing})"
            )
    subjects = sorted(base_subjects)
    a = np.array([base[s] for s in subjects])
    rows = []
    for name, rep in zip(names[1:], reports[1:]):
        b = np.array([rep[s] for s in subjects])
        result = stats.wilcoxon_signed_rank(a, b)
        band = stats.significance_band(result.p_value)
        rows.append((base_name, name, result, band))
        _note(
            f"{base_name} vs {name}: W={result.statistic} "
            f"p={result.p_value:.6g} ({band}, {result.method}, "
            f"n={result.n_effective})"
        )
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        fh.write("model_a,model_b,W,p,band\n")
        for model_a, model_b, result, band in rows:
            fh.write(
                f"{model_a},{model_b},{result.statistic!r},"
                f"{result.p_value!r},{band}\n"
            )
    _emit(comparisons=args.out, rows=len(rows))
    return 0


def _cmd_synth(args) -> int:
    cfg = _load_run_config(args)
    seed = cfg.resolved_seed()
    recordings = dio.generate_synthetic(
        subjects=args.subjects, classes=cfg.num_classes, reps=args.reps,
        seed=seed, channels=args.channels,
        sample_rate_hz=cfg.sample_rate_hz,
        gesture_seconds=args.gesture_seconds, rest_seconds=args.rest_seconds,
    )
    os.makedirs(args.out_dir, exist_ok=True)
    for rec in recordings:
        path = os.path.join(args.out_dir, f"subject{rec.subject:02d}.semg")
        dio.write_recording(path, rec)
        _note(f"wrote {path} ({rec.num_samples} samples)")
    _emit(
        out_dir=args.out_dir, subjects=args.subjects,
        classes=cfg.num_classes, reps=args.reps, seed=seed,
    )
    return 0


def _stem(path, strip: str = "") -> str:
    name = os.path.splitext(os.path.basename(str(path)))[0]
    if strip and name.endswith(strip):
        name = name[: -len(strip)]
    return name


# -- parser and entry point -----------------------------------------------


def _add_common(p: argparse.ArgumentParser, *names):
    flags = {
        "config": lambda: p.add_argument("--config", help="JSON config file"),
        "seed": lambda: p.add_argument("--seed", type=int),
        "window": lambda: (
            p.add_argument("--window-ms", type=int, dest="window_ms"),
            p.add_argument("--stride-ms", type=int, dest="stride_ms"),
        ),
        "model": lambda: (
            p.add_argument("--num-patches", type=int, dest="num_patches"),
            p.add_argument("--model-dim", type=int, dest="model_dim"),
            p.add_argument("--kernel-size", type=int, dest="kernel_size"),
            p.add_argument("--num-classes", type=int, dest="num_classes"),
        ),
        "signal": lambda: (
            p.add_argument("--cutoff-hz", type=float, dest="cutoff_hz"),
            p.add_argument("--mu", type=float),
            p.add_argument("--sample-rate-hz", type=float, dest="sample_rate_hz"),
        ),
        "training": lambda: (
            p.add_argument("--epochs", type=int),
            p.add_argument("--batch-size", type=int, dest="batch_size"),
            p.add_argument("--lr", type=float),
        ),
        "splits": lambda: (
            p.add_argument("--train-reps", dest="train_reps",
                           help="comma-separated repetition ids"),
            p.add_argument("--test-reps", dest="test_reps",
                           help="comma-separated repetition ids"),
        ),
    }
    for name in names:
        flags[name]()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="emgtcn",
        description="surface-EMG gesture recognition pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="filter, compand, and segment recordings")
    p.add_argument("inputs", nargs="+", help="recording files (.semg or .csv)")
    p.add_argument("--out", required=True, help="segment file to write")
    _add_common(p, "config", "window", "signal", "model", "seed")
    p.set_defaults(func=_cmd_preprocess)

    p = sub.add_parser("train", help="train a classifier on a segment file")
    p.add_argument("segments", help="segment file from preprocess")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--trace", required=True, help="per-epoch CSV to write")
    _add_common(p, "config", "model", "training", "seed", "splits", "signal",
                "window")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on held-out segments")
    p.add_argument("checkpoint")
    p.add_argument("segments")
    p.add_argument("--out-dir", required=True, dest="out_dir")
    p.add_argument("--model-id", dest="model_id")
    _add_common(p, "config", "seed", "splits", "signal", "window", "model")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("params", help="audit the parameter count of a config")
    p.add_argument("--channels", type=int)
    _add_common(p, "config", "window", "model", "signal", "seed")
    p.set_defaults(func=_cmd_params)

    p = sub.add_parser("compare", help="Wilcoxon baseline-vs-rest over reports")
    p.add_argument("reports", nargs="+", help="per-subject CSVs; first is baseline")
    p.add_argument("--out", required=True, help="comparison CSV to write")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("synth", help="generate synthetic recordings")
    p.add_argument("--out-dir", required=True, dest="out_dir")
    p.add_argument("--subjects", type=int, default=4)
    p.add_argument("--reps", type=int, default=6)
    p.add_argument("--channels", type=int, default=12)
    p.add_argument("--gesture-seconds", type=float, default=1.0,
                   dest="gesture_seconds")
    p.add_argument("--rest-seconds", type=float, default=0.25, dest="rest_seconds")
    _add_common(p, "config", "signal", "model", "seed")
    p.set_defaults(func=_cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _VALIDATION_ERRORS as err:
        _note(f"error: {err}")
        return 2
    except NumericalError as err:
        _note(f"numerical failure: {err}")
        return 3
    except (FormatError, OSError) as err:
        _note(f"file error: {err}")
        return 4
    except EmgTcnError as err:
        _note(f"error: {err}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
