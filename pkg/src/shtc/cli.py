"""Command-line surface: fit, encode, decode, eval, bench, image-metric, report.

Thread-count env vars are applied before numpy is imported, so the heavy
modules are imported lazily inside the command handlers. Exit codes: 0 ok,
2 config error, 3 data error, 4 training divergence.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

_EXIT_CONFIG = 2
_EXIT_DATA = 3
_EXIT_DIVERGED = 4

_FIT_KEYS = {
    "lambda": float,
    "lambda_e": float,
    "lr": float,
    "iters": int,
    "batch": int,
    "seed": int,
    "refit_period": int,
    "grad_clip": float,
    "joint": bool,
    "quant_mode": str,
    "log_every": int,
    "transform": str,
    "rank": int,
    "n_meas": int,
    "n_atoms": int,
    "n_layers": int,
    "scaling_cols": int,
}

_BENCH_KEYS = {
    "n_rows": int,
    "dim": int,
    "rank": int,
    "spectrum_exp": float,
    "spectrum_scale": float,
    "sparsity": int,
    "spike_scale": float,
    "noise": float,
    "seed": int,
    "basis": str,
    "methods": list,
    "lambdas": list,
    "iters": int,
    "batch": int,
    "n_meas": int,
    "n_layers": int,
}


def _parse_value(raw: str, kind):
    raw = raw.strip().strip('"').strip("'")
    if kind is bool:
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if kind is list:
        items = [s.strip() for s in raw.strip("[]").split(",") if s.strip()]
        out = []
        for item in items:
            try:
                out.append(float(item))
            except ValueError:
                out.append(item)
        return out
    return kind(raw)


def load_config(path, allowed: dict) -> dict:
    """Flat key = value config file; # comments; unknown keys rejected."""
    from .errors import ConfigError

    values = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in allowed:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _parse_value(raw, allowed[key])
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key!r}: {exc}") from exc
    return values


def load_table(path):
    """CSV with a header row, or raw little-endian f32 with a dims sidecar."""
    import numpy as np

    from .errors import DataError

    if not os.path.exists(path):
        raise DataError(f"no such input: {path}")
    if path.endswith(".csv"):
        try:
            data = np.genfromtxt(path, delimiter=",", skip_header=1, dtype=np.float64)
        except Exception as exc:
            raise DataError(f"cannot parse CSV {path}: {exc}") from exc
        if data.ndim == 1:
            data = data[None, :] if data.size else data.reshape(0, 0)
        if data.size == 0 or not np.isfinite(data).all():
            raise DataError(f"{path}: empty table or non-finite entries")
        return data
    dims_path = path + ".dims"
    if not os.path.exists(dims_path):
        raise DataError(f"raw input {path} needs a dims sidecar {dims_path}")
    try:
        rows, cols = (int(t) for t in open(dims_path).read().split())
    except Exception as exc:
        raise DataError(f"bad dims sidecar {dims_path}") from exc
    raw = np.fromfile(path, dtype="<f4")
    if raw.size != rows * cols:
        raise DataError(f"{path}: expected {rows * cols} f32 values, found {raw.size}")
    return raw.reshape(rows, cols).astype(np.float64)


def save_table(path, x):
    import numpy as np

    header = ",".join(f"c{i}" for i in range(x.shape[1]))
    np.savetxt(path, x, delimiter=",", header=header, comments="", fmt="%.17g")


def _out_path(args, name: str) -> str:
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


def _stream_configs(dim: int, cfg: dict):
    from .codec import default_configs

    return default_configs(
        dim,
        transform=cfg.get("transform", "shtc-full"),
        rank=cfg.get("rank"),
        n_meas=cfg.get("n_meas", 15),
        n_atoms=cfg.get("n_atoms", 0),
        n_layers=cfg.get("n_layers", 6),
        scaling_cols=cfg.get("scaling_cols", 0),
    )


def _train_config(cfg: dict, args):
    from .trainer import TrainConfig

    kw = {}
    if "lambda" in cfg:
        kw["lam"] = cfg["lambda"]
    for src, dst in (
        ("lambda_e", "lambda_e"), ("lr", "lr"), ("iters", "iters"), ("batch", "batch"),
        ("refit_period", "refit_period"), ("grad_clip", "grad_clip"), ("joint", "joint"),
        ("quant_mode", "quant_mode"), ("log_every", "log_every"),
    ):
        if src in cfg:
            kw[dst] = cfg[src]
    if args.lam is not None:
        kw["lam"] = args.lam
    kw["seed"] = args.seed if args.seed is not None else cfg.get("seed", 0)
    return TrainConfig(**kw)


def cmd_fit(args) -> int:
    from . import bitstream
    from .trainer import train

    cfg = load_config(args.config, _FIT_KEYS) if args.config else {}
    x = load_table(args.input)
    tc = _train_config(cfg, args)
    bundle, log = train(x, _stream_configs(x.shape[1], cfg), tc)
    bundle_path = _out_path(args, "bundle.shtc")
    counts = bitstream.write(bundle, None, bundle_path)
    log_path = _out_path(args, "train_log.csv")
    with open(log_path, "w", encoding="utf-8") as fh:
        fh.write("iter,loss,bits_base,bits_refine,l1_total,l1_residual\n")
        for row in log:
            fh.write(
                f"{row['iter']},{row['loss']:.10g},{row['bits_base']:.10g},"
                f"{row['bits_refine']:.10g},{row['l1_total']:.10g},{row['l1_residual']:.10g}\n"
            )
    print(json.dumps({"bundle": bundle_path, "train_log": log_path, **counts}))
    return 0


def cmd_encode(args) -> int:
    from . import bitstream
    from .codec import encode_table

    x = load_table(args.input)
    bundle, _ = bitstream.read(args.bundle)
    payloads, _ = encode_table(bundle, x)
    out_path = _out_path(args, "encoded.shtc")
    counts = bitstream.write(bundle, payloads, out_path)
    file_bytes = os.path.getsize(out_path)
    print(json.dumps({
        "encoded": out_path,
        **counts,
        "file_bytes": file_bytes,
        "bits_per_row": file_bytes * 8.0 / x.shape[0],
    }))
    return 0


def cmd_decode(args) -> int:
    from . import bitstream
    from .codec import decode_table

    bundle, payloads = bitstream.read(args.input)
    x_hat = decode_table(bundle, payloads)
    out_path = _out_path(args, "decoded.csv")
    save_table(out_path, x_hat)
    print(json.dumps({"decoded": out_path, "rows": int(x_hat.shape[0]), "cols": int(x_hat.shape[1])}))
    return 0


def _is_bitstream(path) -> bool:
    try:
        with open(path, "rb") as fh:
            return fh.read(4) == b"SHTC"
    except OSError:
        return False


def cmd_eval(args) -> int:
    import numpy as np

    from .errors import DimMismatch

    x = load_table(args.original)
    report = {}
    if _is_bitstream(args.decoded):
        from . import bitstream
        from .codec import decode_table

        bundle, payloads = bitstream.read(args.decoded)
        x_hat = decode_table(bundle, payloads)
        mdl = bitstream.mdl_report(args.decoded)
        report["mdl"] = mdl
        report["bits_per_row"] = mdl["file_bytes"] * 8.0 / x.shape[0]
    else:
        x_hat = load_table(args.decoded)
    if x.shape != x_hat.shape:
        raise DimMismatch(f"table shapes differ: {x.shape} vs {x_hat.shape}")
    from .bench import distortion_db

    report.update({
        "l1": float(np.abs(x - x_hat).mean()),
        "rmse": float(np.sqrt(np.mean((x - x_hat) ** 2))),
        "distortion_db": distortion_db(x, x_hat),
    })
    print(json.dumps(report))
    return 0


def cmd_bench(args) -> int:
    from . import bench

    cfg = load_config(args.config, _BENCH_KEYS) if args.config else {}
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    if args.input:
        x = load_table(args.input)
    else:
        spec = bench.SyntheticSpec(
            n_rows=int(cfg.get("n_rows", 20000)),
            dim=int(cfg.get("dim", 50)),
            rank=int(cfg.get("rank", 15)),
            spectrum_exp=float(cfg.get("spectrum_exp", 1.5)),
            spectrum_scale=float(cfg.get("spectrum_scale", 3.0)),
            sparsity=int(cfg.get("sparsity", 5)),
            spike_scale=float(cfg.get("spike_scale", 0.6)),
            noise=float(cfg.get("noise", 0.01)),
            seed=seed,
            basis=str(cfg.get("basis", "random")),
        )
        x = bench.synth_source(spec)
    methods = [str(m) for m in cfg.get("methods", [])] or (
        [args.method] if args.method else list(bench.METHODS)
    )
    lambdas = [float(v) for v in cfg.get("lambdas", [])] or (
        [args.lam] if args.lam is not None else list(bench.DEFAULT_LAMBDAS)
    )
    iters = int(cfg.get("iters", 3000))
    batch = int(cfg.get("batch", 256))
    curves = []
    for method in methods:
        curves.append(
            bench.baseline_rd(
                x, method, lambdas, seed=seed, iters=iters, batch=batch,
                n_meas=int(cfg.get("n_meas", 15)), n_layers=int(cfg.get("n_layers", 6)),
            )
        )
    rd_path = _out_path(args, "rd_curve.csv")
    bench.write_rd_csv(curves, rd_path)
    bd_path = _out_path(args, "bd_rate.csv")
    rows = bench.write_bd_csv(curves, bd_path)
    print(json.dumps({
        "rd_curve": rd_path,
        "bd_rate": bd_path,
        "bd_rows": [{"test": t, "anchor": a, "percent": v} for t, a, v in rows],
    }))
    return 0


def cmd_image_metric(args) -> int:
    from .imagemetric import read_ppm, ycbcr_components

    comps = ycbcr_components(read_ppm(args.image_a), read_ppm(args.image_b))
    print(json.dumps(comps))
    return 0


def cmd_report(args) -> int:
    from .errors import ConfigError

    if not args.table and not args.bitstream:
        raise ConfigError("report needs --table and/or --bitstream")
    out = {}
    if args.table:
        from . import bench
        from .base_layer import fit_klt

        x = load_table(args.table)
        rank = min(15, x.shape[1])
        out["analysis"] = bench.analysis_report(x, fit_klt(x, rank), args.out)
    if args.bitstream:
        from . import bitstream

        out["mdl"] = bitstream.mdl_report(args.bitstream)
    print(json.dumps(out))
    return 0


def _add_common(parser, seed_default=None):
    parser.add_argument("--config", default=None, help="key = value config file")
    parser.add_argument("--seed", type=int, default=seed_default)
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--lambda", dest="lam", type=float, default=None)
    parser.add_argument("--method", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shtc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="train a codec bundle on a table")
    p.add_argument("input")
    _add_common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("encode", help="entropy-code a table with a fitted bundle")
    p.add_argument("input")
    p.add_argument("bundle")
    _add_common(p)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="reconstruct a table from a bitstream")
    p.add_argument("input")
    _add_common(p)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("eval", help="distortion/rate metrics for a reconstruction")
    p.add_argument("original")
    p.add_argument("decoded", help="decoded table or .shtc bitstream")
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="R-D sweep over baseline transforms")
    p.add_argument("--input", default=None, help="table to bench (default: synthetic)")
    _add_common(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("image-metric", help="YCbCr-space distortion between two PPM images")
    p.add_argument("image_a")
    p.add_argument("image_b")
    _add_common(p)
    p.set_defaults(func=cmd_image_metric)

    p = sub.add_parser("report", help="correlation/energy report and MDL accounting")
    p.add_argument("--table", default=None)
    p.add_argument("--bitstream", default=None)
    _add_common(p)
    p.set_defaults(func=cmd_report)

    return parser


def _apply_threads(args):
    threads = os.environ.get("SHTC_THREADS")
    count = int(threads) if threads else getattr(args, "threads", 1)
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, str(count))


def main(argv=None) -> int:
    from .errors import (
        ConfigError,
        DataError,
        DecodeError,
        DimMismatch,
        Diverged,
        InsufficientData,
    )

    args = build_parser().parse_args(argv)
    _apply_threads(args)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return _EXIT_CONFIG
    except Diverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return _EXIT_DIVERGED
    except (DataError, DecodeError, DimMismatch, InsufficientData, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return _EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
