"""Command-line entry point: ``brsr <subcommand> [flags]``.

Settings are resolved as command-line flag, then config file, then built-in
default. The config file is flat ``key = value`` text; keys in a
``[<subcommand>]`` section apply to that subcommand and keys in ``[common]``
apply to all of them::

    [common]
    seed = 7

    [dataset-gen]
    mode = brsr
    n_train = 2000

    [train]
    epochs = 100
    lambda_freq = 200

Human-readable logs go to stderr. On failure a single JSON line
``{"error": <kind>, "code": <exit code>, "message": ...}`` is printed to stderr.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_IO = 4
EXIT_CHECK_FAILED = 5
EXIT_DIVERGED = 6

log = logging.getLogger("brsr")


class CliError(Exception):
    def __init__(self, kind: str, code: int, message: str):
        super().__init__(message)
        self.kind = kind
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", EXIT_USAGE, f"{self.prog}: {message}")


@dataclass(frozen=True)
class Opt:
    key: str
    type: type
    default: object
    help: str
    choices: tuple | None = None


def _opt_bool(v):
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _opt_none_float(v):
    if v is None or str(v).strip().lower() in ("", "none"):
        return None
    return float(v)


COMMON = [
    Opt("seed", int, 0, "master seed"),
    Opt("out", str, None, "output path (directory, or .npy file for restore)"),
]

OPTIONS = {
    "dataset-gen": [
        Opt("mode", str, "brsr", "corruption mode", ("brsr", "baseline")),
        Opt("n_train", int, 800, "training samples (per SNR level in baseline mode)"),
        Opt("n_val", int, 100, "validation samples (per SNR level in baseline mode)"),
        Opt("n_test", int, 100, "test samples (per SNR level in baseline mode)"),
        Opt("snr_min", float, -14.0, "lowest target SNR in dB"),
        Opt("snr_max", float, 10.0, "highest target SNR in dB"),
        Opt("snr_step", float, 2.0, "SNR grid step in baseline mode"),
        Opt("echo_delay_min", int, 128, "shortest echo delay in samples"),
        Opt("echo_delay_max", int, 512, "longest echo delay in samples"),
        Opt("pool_size", int, 100, "interference pool size"),
        Opt("workers", int, 1, "generation processes (output is identical for any value)"),
    ],
    "train": [
        Opt("dataset", str, None, "dataset directory"),
        Opt("epochs", int, 1000, "training epochs"),
        Opt("batch_size", int, 64, "batch size"),
        Opt("lr", float, 5e-4, "learning rate for generator and discriminator"),
        Opt("lambda_time", float, 100.0, "time-domain L1 weight"),
        Opt("lambda_freq", float, 200.0, "spectrogram L1 weight (0 = time-only)"),
        Opt("q_order", int, 3, "Self-ONN polynomial order"),
        Opt("val_every", int, 5, "epochs between validation passes"),
        Opt("checkpoint_every", int, 0, "epochs between extra checkpoints (0 = best and final only)"),
        Opt("clip_norm", _opt_none_float, None, "global gradient-norm clip (none = off)"),
        Opt("max_train_samples", int, None, "use only the first N training samples"),
        Opt("threads", int, 1, "BLAS threads (fixed for reproducibility)"),
    ],
    "restore": [
        Opt("checkpoint", str, None, "first-pass checkpoint directory"),
        Opt("second_pass", str, None, "second-pass checkpoint directory (cascade)"),
        Opt("input", str, None, ".npy array (N, 2, L) or a dataset directory"),
        Opt("split", str, "test", "split to restore when --input is a dataset", ("train", "val", "test")),
        Opt("batch_size", int, 64, "batch size"),
    ],
    "eval": [
        Opt("checkpoint", str, None, "first-pass checkpoint directory"),
        Opt("second_pass", str, None, "second-pass checkpoint directory (cascade)"),
        Opt("dataset", str, None, "dataset directory"),
        Opt("split", str, "test", "split to evaluate", ("train", "val", "test")),
        Opt("restorer", str, "model", "model or a control restorer", ("model", "identity", "oracle")),
        Opt("batch_size", int, 64, "batch size"),
        Opt("timing_batches", int, 100, "batches for the inference timing report (0 = skip)"),
    ],
    "gradcheck": [
        Opt("tolerance", float, 1e-4, "maximum relative error"),
    ],
    "inspect": [
        Opt("dataset", str, None, "dataset directory"),
        Opt("index", int, 0, "sample index"),
    ],
}
OPTIONS["train-second-pass"] = OPTIONS["train"] + [
    Opt("checkpoint", str, None, "first-pass checkpoint directory"),
]

HELP = {
    "dataset-gen": "generate a BRSR or AWGN-baseline dataset",
    "train": "train a generator/discriminator pair",
    "train-second-pass": "train the second model of the two-pass cascade",
    "restore": "restore signals with a trained checkpoint",
    "eval": "evaluate restoration metrics and inference time",
    "gradcheck": "run the finite-difference gradient suites",
    "inspect": "print the provenance record of one dataset sample",
}


def _flag(key: str) -> str:
    return "--" + key.replace("_", "-")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="brsr", description="Blind radar signal restoration toolkit.")
    parser.add_argument("--log-level", default="INFO", choices=("DEBUG", "INFO", "WARNING", "ERROR"),
                        help="stderr log verbosity (default: INFO)")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")
    for name, opts in OPTIONS.items():
        p = sub.add_parser(name, help=HELP[name], description=HELP[name])
        p.add_argument("--config", default=None, help=f"config file with [common] and [{name}] sections (default: None)")
        for o in COMMON + opts:
            kw = {"default": None, "help": f"{o.help} (default: {o.default})", "dest": o.key}
            if o.choices:
                kw["choices"] = o.choices
            p.add_argument(_flag(o.key), **kw)
    return parser


def resolve(command: str, args: argparse.Namespace) -> dict:
    """Effective settings: flags over config file over defaults."""
    opts = COMMON + OPTIONS[command]
    file_values = {}
    if args.config:
        cp = configparser.ConfigParser(interpolation=None)
        try:
            with open(args.config, encoding="utf-8") as f:
                cp.read_file(f)
        except OSError as exc:
            raise CliError("io", EXIT_IO, f"cannot read config file: {exc}") from exc
        except configparser.Error as exc:
            raise CliError("config", EXIT_CONFIG, f"malformed config file: {exc}") from exc
        known = {o.key for o in opts}
        for section in ("common", command):
            if cp.has_section(section):
                for k, v in cp.items(section):
                    k = k.replace("-", "_")
                    if k not in known:
                        # common keys meant for other subcommands are fine
                        if section == command:
                            raise CliError("config", EXIT_CONFIG, f"unknown key {k!r} in [{section}]")
                        continue
                    file_values[k] = v
    out = {}
    for o in opts:
        raw = getattr(args, o.key)
        if raw is None:
            raw = file_values.get(o.key)
        if raw is None:
            out[o.key] = o.default
            continue
        try:
            val = o.type(raw) if o.type is not bool else _opt_bool(raw)
        except (TypeError, ValueError) as exc:
            raise CliError("config", EXIT_CONFIG, f"invalid value for {o.key}: {raw!r}") from exc
        if o.choices and val not in o.choices:
            raise CliError("config", EXIT_CONFIG, f"{o.key} must be one of {o.choices}, got {val!r}")
        out[o.key] = val
    return out


def _require(cfg: dict, *keys):
    for k in keys:
        if cfg.get(k) in (None, ""):
            raise CliError("config", EXIT_CONFIG, f"missing required setting {_flag(k)}")


def _write_manifest(path: Path, command: str, cfg: dict, extra=None) -> None:
    from . import __version__

    doc = {"command": command, "version": __version__, "effective_config": cfg, **(extra or {})}
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _set_threads(n: int) -> None:
    from threadpoolctl import threadpool_limits

    threadpool_limits(n)


# -- commands -----------------------------------------------------------------

def cmd_dataset_gen(cfg):
    from .dataset import DatasetConfig, generate_dataset

    _require(cfg, "out")
    try:
        dc = DatasetConfig(mode=cfg["mode"], n_train=cfg["n_train"], n_val=cfg["n_val"], n_test=cfg["n_test"],
                           seed=cfg["seed"], snr_min=cfg["snr_min"], snr_max=cfg["snr_max"],
                           snr_step=cfg["snr_step"], echo_delay_min=cfg["echo_delay_min"],
                           echo_delay_max=cfg["echo_delay_max"], pool_size=cfg["pool_size"])
    except ValueError as exc:
        raise CliError("config", EXIT_CONFIG, str(exc)) from exc
    m = generate_dataset(dc, cfg["out"], workers=cfg["workers"])
    _write_manifest(Path(cfg["out"]) / "cli_manifest.json", "dataset-gen", cfg, {"samples_sha256": m.samples_sha256})
    log.info("wrote %d samples to %s (sha256 %s)", m.sample_count, cfg["out"], m.samples_sha256[:16])
    print(m.samples_sha256)
    return EXIT_OK


def _train_config(cfg):
    from .training import TrainConfig

    try:
        return TrainConfig(epochs=cfg["epochs"], batch_size=cfg["batch_size"], lr_g=cfg["lr"], lr_d=cfg["lr"],
                           lambda_time=cfg["lambda_time"], lambda_freq=cfg["lambda_freq"], q_order=cfg["q_order"],
                           seed=cfg["seed"], val_every=cfg["val_every"], checkpoint_every=cfg["checkpoint_every"],
                           clip_norm=cfg["clip_norm"], max_train_samples=cfg["max_train_samples"],
                           dataset=cfg["dataset"], out_dir=cfg["out"])
    except ValueError as exc:
        raise CliError("config", EXIT_CONFIG, str(exc)) from exc


def cmd_train(cfg, second_pass=False):
    from . import training

    _require(cfg, "dataset", "out", *(["checkpoint"] if second_pass else []))
    _set_threads(cfg["threads"])
    tc = _train_config(cfg)
    out = Path(cfg["out"])
    try:
        if second_pass:
            res = training.train_second_pass(cfg["checkpoint"], cfg["dataset"], tc, out)
        else:
            res = training.train(tc, cfg["dataset"], out)
    except training.TrainingDivergedError as exc:
        raise CliError("diverged", EXIT_DIVERGED, str(exc)) from exc
    _write_manifest(out / "cli_manifest.json", "train-second-pass" if second_pass else "train", cfg)
    log.info("best validation SNR %.3f dB at epoch %d", res.record.best_val_snr, res.record.best_epoch)
    return EXIT_OK


def _load_signals(path: str, split: str):
    p = Path(path)
    if p.is_dir():
        from .dataset import open_dataset

        return np.asarray(open_dataset(p).split(split).corrupted)
    try:
        return np.load(p)
    except (OSError, ValueError) as exc:
        raise CliError("io", EXIT_IO, f"cannot load signals from {p}: {exc}") from exc


def cmd_restore(cfg):
    from .training import restore, restore_cascade

    _require(cfg, "checkpoint", "input", "out")
    x = _load_signals(cfg["input"], cfg["split"])
    if cfg["second_pass"]:
        y = restore_cascade(cfg["checkpoint"], cfg["second_pass"], x, cfg["batch_size"])
    else:
        y = restore(cfg["checkpoint"], x, cfg["batch_size"])
    out = Path(cfg["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    np.save(out, y)
    _write_manifest(out.with_suffix(".manifest.json"), "restore", cfg)
    log.info("restored %d signals into %s", len(y), out)
    return EXIT_OK


def cmd_eval(cfg):
    from .evaluation import evaluate, timing_report

    _require(cfg, "dataset", "out")
    if cfg["restorer"] == "model":
        _require(cfg, "checkpoint")
    mode = "cascade" if cfg["second_pass"] else "single"
    rep = evaluate(cfg["checkpoint"], cfg["dataset"], cfg["split"], mode, cfg["second_pass"],
                   cfg["restorer"], cfg["batch_size"])
    out = Path(cfg["out"])
    rep.write(out)
    if cfg["timing_batches"] and cfg["restorer"] == "model":
        t = timing_report(cfg["checkpoint"], 64, cfg["timing_batches"])
        (out / "timing.json").write_text(json.dumps(t, indent=1, sort_keys=True) + "\n")
        log.info("inference %.3f ms per signal (batch 64)", t["ms_per_signal"])
    _write_manifest(out / "cli_manifest.json", "eval", cfg)
    agg = rep.overall
    log.info("mean SNR %.3f -> %.3f dB (improvement %.3f dB, %.1f%% improved)", agg["mean_corrupted_snr"],
             agg["mean_restored_snr"], agg["mean_improvement"], 100 * agg["frac_improved"])
    return EXIT_OK


def cmd_gradcheck(cfg):
    from . import gradsuite

    results = gradsuite.run_suite(cfg["seed"])
    print(gradsuite.format_table(results))
    worst = max(r.max_rel_error for _, r in results)
    ok = all(r.passed for _, r in results) and worst < cfg["tolerance"]
    if not ok:
        bad = [n for n, r in results if not (r.passed and r.max_rel_error < cfg["tolerance"])]
        raise CliError("check_failed", EXIT_CHECK_FAILED, f"gradient check failed for {', '.join(bad)}")
    return EXIT_OK


def cmd_inspect(cfg):
    from .dataset import open_dataset

    _require(cfg, "dataset")
    ds = open_dataset(cfg["dataset"])
    try:
        rec = ds.record(cfg["index"])
    except IndexError as exc:
        raise CliError("config", EXIT_CONFIG, str(exc)) from exc
    print(json.dumps(rec.provenance(), indent=1, sort_keys=True))
    return EXIT_OK


COMMANDS = {
    "dataset-gen": cmd_dataset_gen,
    "train": cmd_train,
    "train-second-pass": lambda cfg: cmd_train(cfg, second_pass=True),
    "restore": cmd_restore,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
    "inspect": cmd_inspect,
}


def run(argv=None) -> int:
    from .autodiff.checkpoint import CheckpointError

    try:
        args = build_parser().parse_args(argv)
        if not args.command:
            raise CliError("usage", EXIT_USAGE, "no subcommand given; see --help")
        logging.basicConfig(level=args.log_level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
        cfg = resolve(args.command, args)
        return COMMANDS[args.command](cfg)
    except CliError as exc:
        err = exc
    except CheckpointError as exc:
        err = CliError("checkpoint", EXIT_IO, str(exc))
    except (OSError, EOFError) as exc:
        err = CliError("io", EXIT_IO, str(exc))
    except ValueError as exc:
        err = CliError("config", EXIT_CONFIG, str(exc))
    except Exception as exc:  # noqa: BLE001
        err = CliError("internal", EXIT_INTERNAL, f"{type(exc).__name__}: {exc}")
    print(json.dumps({"error": err.kind, "code": err.code, "message": str(err)}), file=sys.stderr)
    return err.code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
