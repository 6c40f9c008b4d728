"""Command-line entry point: make-data, train, generate, evaluate, bench.

Exit codes: 0 success, 1 usage or config error, 2 numerical failure, 3 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, resolve
from .dataset import (SeriesDataset, condition_to_mask, load_csv, make_windows, parse_condition,
                      random_mask, split_by_root, write_csv)
from .denoiser import Checkpoint, Denoiser, DenoiserConfig, load_checkpoint, save_checkpoint, train
from .encoding import MetadataCodec, encode_metadata, fit_scaler
from .metrics import MetricConfig, evaluate, format_kv, masked_mse
from .numerics import NonFiniteError
from .sampler import SamplerConfig, generate
from .schedule import linear_schedule
from .synthetic import KINDS, make_data

log = logging.getLogger("stitchgen")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# -- shared helpers ------------------------------------------------------------

def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file")
    for f in fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        p.add_argument(flag, dest=f.name, default=None, metavar=f.name.upper(),
                       help=f"(default: {f.default!r})")


def _resolve(args) -> RunConfig:
    overrides = {f.name: getattr(args, f.name) for f in fields(RunConfig)}
    return resolve(args.config, overrides)


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.to_text())
    return out


def _load_data(cfg: RunConfig) -> SeriesDataset:
    if not cfg.data:
        raise ConfigError("no dataset given (set 'data' or --data)")
    return load_csv(cfg.data, cfg.metadata_list, cfg.channel_list)


def _test_root(cfg: RunConfig, data: SeriesDataset) -> str:
    if cfg.test_root:
        return cfg.test_root
    # default: the last root category in file order
    return data.metadata[0][-1]


def _write_table(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for row in rows:
            wr.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _read_table(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ConfigError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    try:
        values = np.array([[float(v) for v in r] for r in body], dtype=np.float64)
    except ValueError as exc:
        raise ConfigError(f"{path}: non-numeric cell ({exc})") from None
    if body and values.shape[1] != len(header):
        raise ConfigError(f"{path}: ragged rows")
    return header, values.reshape(len(body), len(header))


# -- commands ------------------------------------------------------------------

def cmd_make_data(args) -> int:
    data = make_data(args.kind, entities=args.entities, months=args.months, days=args.days,
                     channels=args.channels, seed=args.seed, length=args.length)
    out = Path(args.out)
    if out.parent and not out.parent.exists():
        out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(data, out)
    print(f"wrote {data.M} rows x {data.C} channels to {out}")
    return EXIT_OK


def _task_mask(cfg: RunConfig, test: SeriesDataset) -> np.ndarray:
    if cfg.condition and cfg.missing_frac >= 0:
        raise ConfigError("give either a condition or a missing fraction, not both")
    if cfg.missing_frac >= 0:
        if not 0 < cfg.missing_frac <= 1:
            raise ConfigError("missing fraction must be in (0, 1]")
        return random_mask(test.M, cfg.missing_frac, cfg.seed)
    cond = parse_condition(cfg.condition) if cfg.condition else (None,) * test.L
    if len(cond) != test.L:
        raise ConfigError(f"condition has {len(cond)} fields, dataset has {test.L} metadata columns")
    mask = condition_to_mask(test, cond)
    if not mask.any():
        raise ConfigError(f"condition {cfg.condition!r} selects no test rows")
    return mask


def cmd_train(cfg: RunConfig) -> int:
    data = _load_data(cfg)
    root = _test_root(cfg, data)
    codec = MetadataCodec.fit(data.metadata_columns, data.metadata)
    train_split, _ = split_by_root(data, root)
    scaler = fit_scaler(train_split.signals)
    sched = linear_schedule(cfg.T, cfg.alpha_first, cfg.alpha_last, cfg.sigma_convention)
    model = Denoiser(DenoiserConfig(window=cfg.window, channels=data.C, meta_width=codec.width,
                                    step_dim=cfg.step_dim, hidden=cfg.hidden, mix_width=cfg.mix_width,
                                    activation=cfg.activation), seed=cfg.seed)
    losses = train(model, scaler.transform(train_split.signals), encode_metadata(train_split.metadata, codec),
                   sched, epochs=cfg.epochs, batch_size=cfg.train_batch, lr=cfg.lr, seed=cfg.seed,
                   optimizer=cfg.optimizer)
    if losses and not np.isfinite(losses[-1]):
        raise NonFiniteError("final training loss is not finite")
    out = _out_dir(cfg)
    extra = {"test_root": root, "metadata_columns": data.metadata_columns,
             "channel_columns": data.channel_columns}
    save_checkpoint(out / "checkpoint.json", Checkpoint(model, sched, codec, scaler, extra))
    _write_table(out / "loss_trace.csv", ["epoch", "loss"], [(i + 1, v) for i, v in enumerate(losses)])
    if losses:
        print(f"trained {cfg.epochs} epochs: loss {losses[0]:.4f} -> {losses[-1]:.4f}")
    else:
        print("epochs = 0: saved the initialised model")
    return EXIT_OK


def _prepare(cfg: RunConfig):
    """Checkpoint, test split and task mask for generate and bench."""
    if not cfg.checkpoint:
        raise ConfigError("no checkpoint given (set 'checkpoint' or --checkpoint)")
    ck = load_checkpoint(cfg.checkpoint)
    data = _load_data(cfg)
    want = ck.extra.get("channel_columns")
    if want and want != data.channel_columns:
        raise ConfigError(f"checkpoint expects channels {want}, dataset has {data.channel_columns}")
    if ck.model.config.window != cfg.window:
        raise ConfigError(f"checkpoint window is {ck.model.config.window}, config asks for {cfg.window}")
    root = cfg.test_root or ck.extra.get("test_root") or _test_root(cfg, data)
    _, test = split_by_root(data, root)
    mask = _task_mask(cfg, test)
    x = ck.scaler.transform(test.signals)
    a = encode_metadata(test.metadata, ck.codec)
    try:
        ws = make_windows(x, a, mask, cfg.window, cfg.stride)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return ck, test, mask, x, ws


def _sampler_config(cfg: RunConfig, mode: str | None = None) -> SamplerConfig:
    return SamplerConfig(eta=cfg.eta, stride=cfg.stride, window=cfg.window, batch=cfg.batch,
                         mode=mode or cfg.mode, stitch_metric=cfg.stitch_metric, grad_mode=cfg.grad_mode,
                         symmetric_stitch=cfg.symmetric_stitch, seed=cfg.seed, workers=cfg.workers,
                         merge_rule=cfg.merge_rule)


def cmd_generate(cfg: RunConfig) -> int:
    ck, test, mask, x, ws = _prepare(cfg)
    res = generate(ck.model, ck.schedule, ws, _sampler_config(cfg))
    out = _out_dir(cfg)
    seq = ck.scaler.inverse(res.sequence)
    header = ["timestep", "mask"] + test.channel_columns
    _write_table(out / "generated.csv", header,
                 [[i + 1, int(mask[i])] + list(seq[i]) for i in range(test.M)])
    _write_table(out / "truth.csv", header,
                 [[i + 1, int(mask[i])] + list(test.signals[i]) for i in range(test.M)])
    _write_table(out / "trace.csv", ["t", "self_loss", "stitch_loss", "overlap_discrepancy"], res.trace)
    summary = dict(res.summary())
    summary.update(windows=ws.J, masked_rows=int(mask.sum()),
                   masked_mse=masked_mse(res.sequence, x, mask))
    (out / "summary.json").write_text(json.dumps(summary, indent=1) + "\n")
    print(f"{res.mode}: {ws.J} windows, {res.calls} denoiser calls, {res.seconds:.2f}s, "
          f"masked MSE {summary['masked_mse']:.5f} (standardised units)")
    return EXIT_OK


def cmd_evaluate(args, cfg: RunConfig) -> int:
    g_head, g = _read_table(args.generated)
    r_head, r = _read_table(args.truth)
    if g_head != r_head:
        raise ConfigError("generated and truth CSVs have different columns")
    if g.shape != r.shape:
        raise ConfigError(f"misaligned inputs: {g.shape[0]} generated rows vs {r.shape[0]} truth rows")
    chan = [i for i, h in enumerate(g_head) if h not in ("timestep", "mask")]
    if args.mask:
        m_head, m = _read_table(args.mask)
        if len(m) != len(g):
            raise ConfigError(f"misaligned inputs: mask has {len(m)} rows, data has {len(g)}")
        mask = m[:, m_head.index("mask")] if "mask" in m_head else m[:, -1]
    elif "mask" in g_head:
        mask = g[:, g_head.index("mask")]
    else:
        mask = np.ones(len(g))
    gen, truth = g[:, chan], r[:, chan]
    if args.checkpoint:
        scaler = load_checkpoint(args.checkpoint).scaler
        gen, truth = scaler.transform(gen), scaler.transform(truth)
    values = evaluate(gen, truth, mask, MetricConfig(cfg.max_lag, cfg.mse_scope))
    text = format_kv(values)
    if "xcorr" not in values:
        text += "# xcorr omitted: needs at least two channels\n"
    text += "".join("# " + line + "\n" for line in cfg.to_text().splitlines()[1:])
    out = Path(args.metrics_out or Path(cfg.out) / "metrics.txt")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text)
    print(format_kv(values), end="")
    return EXIT_OK


def cmd_bench(cfg: RunConfig) -> int:
    ck, test, mask, x, ws = _prepare(cfg)
    runs = {}
    for mode in ("parallel", "autoregressive"):
        res = generate(ck.model, ck.schedule, ws, _sampler_config(cfg, mode))
        runs[mode] = res
    par, ar = runs["parallel"], runs["autoregressive"]
    report = {
        "windows": ws.J,
        "batch": cfg.batch,
        "workers": cfg.workers,
        "parallel_seconds": par.seconds,
        "autoregressive_seconds": ar.seconds,
        "parallel_calls": par.calls,
        "autoregressive_calls": ar.calls,
        "parallel_mse": masked_mse(par.sequence, x, mask),
        "autoregressive_mse": masked_mse(ar.sequence, x, mask),
        "speedup": ar.seconds / par.seconds if par.seconds > 0 else float("inf"),
        "call_ratio": ar.calls / par.calls,
        "ideal_speedup": min(cfg.batch, ws.J),
    }
    out = _out_dir(cfg)
    (out / "bench.txt").write_text(format_kv(report))
    print(format_kv(report), end="")
    return EXIT_OK


# -- entry point ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stitchgen", description="Metadata-conditioned diffusion generation of long time series.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("make-data", help="write a synthetic dataset CSV")
    p.add_argument("--kind", choices=KINDS, default="calendar-sines")
    p.add_argument("--entities", type=int, default=3)
    p.add_argument("--months", type=int, default=12)
    p.add_argument("--days", type=int, default=30)
    p.add_argument("--channels", type=int, default=2)
    p.add_argument("--length", type=int, default=None, help="keep only the first LENGTH rows")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="data.csv")

    for name, text in (("train", "fit the denoiser"),
                       ("generate", "fill the task mask of the test split"),
                       ("bench", "compare parallel and autoregressive sampling")):
        _add_config_flags(sub.add_parser(name, help=text))

    p = sub.add_parser("evaluate", help="score a generated CSV against the truth")
    _add_config_flags(p)
    p.add_argument("--generated", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--mask", help="CSV with a 'mask' column (default: the generated file's mask column)")
    p.add_argument("--metrics-out", help="metrics file (default: OUT/metrics.txt)")
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.command == "make-data":
            return cmd_make_data(args)
        cfg = _resolve(args)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "generate":
            return cmd_generate(cfg)
        if args.command == "evaluate":
            return cmd_evaluate(args, cfg)
        return cmd_bench(cfg)
    except UsageError as exc:
        print(f"stitchgen: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NonFiniteError as exc:
        print(f"stitchgen: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, FileNotFoundError) as exc:
        print(f"stitchgen: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, ValueError, KeyError) as exc:
        print(f"stitchgen: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
