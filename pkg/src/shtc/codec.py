"""Stream configuration, codec bundle, and the deterministic encode/decode
paths that tie the transforms, quantizer, and entropy coder together.

A table is compressed as one or more column streams. Each stream has a base
layer (fitted KLT or a fixed orthonormal basis, truncated to ``rank``
coefficients) and, for the full hierarchy, a refinement layer coding the
base-layer residual. All floats in a finalized bundle have passed through
float32, so encoder- and decoder-side reconstructions are bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import base_layer, linalg, quantizer, refinement
from .base_layer import KltModel
from .entropy import GaussianEntropyModel, decode_symbols, encode_symbols
from .errors import ConfigError, DimMismatch
from .quantizer import QuantSchedule, channel_schedule
from .refinement import RefinementModel

TRANSFORMS = ("none", "dct", "haar", "klt-trunc", "shtc-full")

# Transform kinds whose basis must be transmitted (data-dependent).
_STORED_BASIS = ("klt-trunc", "shtc-full")


@dataclass
class StreamConfig:
    """One column range of the table and how to transform it."""

    name: str
    col_start: int
    col_end: int
    transform: str = "shtc-full"
    rank: int = 15
    n_meas: int = 15
    n_atoms: int = 0  # 0 means "same as stream dim"
    n_layers: int = 6

    def __post_init__(self):
        if self.transform not in TRANSFORMS:
            raise ConfigError(f"unknown transform {self.transform!r}")
        if not self.name.isascii() or len(self.name) > 8:
            raise ConfigError("stream name must be ascii, at most 8 chars")
        if self.col_end <= self.col_start:
            raise ConfigError("empty column range")
        if not 1 <= self.rank <= self.dim:
            raise ConfigError(f"rank must be in [1, {self.dim}]")

    @property
    def dim(self) -> int:
        return self.col_end - self.col_start

    @property
    def has_refinement(self) -> bool:
        return self.transform == "shtc-full"

    @property
    def stores_basis(self) -> bool:
        return self.transform in _STORED_BASIS

    @property
    def atoms(self) -> int:
        return self.n_atoms if self.n_atoms else self.dim


def default_configs(
    dim: int,
    transform: str = "shtc-full",
    rank: int | None = None,
    n_meas: int = 15,
    n_atoms: int = 0,
    n_layers: int = 6,
    scaling_cols: int = 0,
) -> list[StreamConfig]:
    """Feature stream over the leading columns, plus an optional base-only
    stream with full rank over the trailing ``scaling_cols`` columns.

    ``rank=None`` picks the transform default: 15 retained coefficients for
    the learned bases, all of them for the fixed ones.
    """
    feat_dim = dim - scaling_cols
    if feat_dim < 1:
        raise ConfigError("scaling_cols leaves no feature columns")
    if rank is None:
        rank = feat_dim if transform in ("none", "dct", "haar") else min(15, feat_dim)
    rank = min(rank, feat_dim)
    n_meas = min(n_meas, feat_dim)
    configs = [
        StreamConfig(
            name="feat",
            col_start=0,
            col_end=feat_dim,
            transform=transform,
            rank=rank,
            n_meas=n_meas,
            n_atoms=n_atoms,
            n_layers=n_layers,
        )
    ]
    if scaling_cols:
        configs.append(
            StreamConfig(
                name="scale",
                col_start=feat_dim,
                col_end=dim,
                transform="klt-trunc",
                rank=scaling_cols,
            )
        )
    return configs


@dataclass
class StreamModel:
    """Everything needed to decode one stream (the transmitted model)."""

    config: StreamConfig
    klt: KltModel
    base_sched: QuantSchedule
    base_entropy: GaussianEntropyModel
    refine: RefinementModel | None = None
    refine_sched: QuantSchedule | None = None
    refine_entropy: GaussianEntropyModel | None = None


@dataclass
class CodecBundle:
    streams: list[StreamModel] = field(default_factory=list)

    @property
    def dim(self) -> int:
        return max(s.config.col_end for s in self.streams)


def _fixed_basis(kind: str, dim: int) -> np.ndarray:
    if kind == "none":
        return np.eye(dim)
    if kind == "dct":
        return linalg.dct_matrix(dim).T
    if kind == "haar":
        return linalg.haar_matrix(dim).T
    raise ConfigError(f"no fixed basis for {kind!r}")


_STEP_FRAC = 0.3
_SD_FLOOR = 1e-4


def _coeff_stats(values: np.ndarray) -> np.ndarray:
    return np.maximum(values.std(axis=0), _SD_FLOOR)


def fit_stream(x: np.ndarray, cfg: StreamConfig, rng: np.random.Generator) -> StreamModel:
    xs = x[:, cfg.col_start : cfg.col_end]
    if cfg.stores_basis:
        klt = base_layer.fit_klt(xs, cfg.rank)
    else:
        mean = xs.mean(axis=0)
        basis = _fixed_basis(cfg.transform, cfg.dim)
        coeffs = (xs - mean) @ basis
        klt = KltModel(mean=mean, basis=basis, eigenvalues=coeffs.var(axis=0), rank=cfg.rank)
    theta_p = base_layer.analyze_base(xs, klt)
    sd = _coeff_stats(theta_p)
    sm = StreamModel(
        config=cfg,
        klt=klt,
        base_sched=channel_schedule(_STEP_FRAC * float(np.median(sd)), 0.0, cfg.rank),
        base_entropy=GaussianEntropyModel(mu=np.zeros(cfg.rank), sigma=sd),
    )
    if cfg.has_refinement:
        r0 = xs - base_layer.synthesize_base(theta_p, klt)
        sm.refine = refinement.init_refinement(
            cfg.dim, cfg.n_meas, cfg.atoms, cfg.n_layers, rng,
            thresh_init=max(0.5 * float(r0.std()), 1e-3),
        )
        sdy = _coeff_stats(refinement.analyze_refine(r0, sm.refine))
        sm.refine_sched = channel_schedule(_STEP_FRAC * float(np.median(sdy)), 0.0, cfg.n_meas)
        sm.refine_entropy = GaussianEntropyModel(mu=np.zeros(cfg.n_meas), sigma=sdy)
    return sm


def fit_bundle(x: np.ndarray, configs: list[StreamConfig], rng: np.random.Generator) -> CodecBundle:
    x = np.asarray(x, dtype=np.float64)
    if configs and max(c.col_end for c in configs) != x.shape[1]:
        raise DimMismatch("stream configs do not cover the table columns")
    return CodecBundle(streams=[fit_stream(x, c, rng) for c in configs])


def _f32(a: np.ndarray) -> np.ndarray:
    return np.asarray(a, dtype=np.float32).astype(np.float64)


def finalize_bundle(bundle: CodecBundle) -> CodecBundle:
    """Round every model float through float32 (the wire precision), so the
    in-process reconstruction matches a decode from file bit-exactly."""
    out = []
    for sm in bundle.streams:
        klt = KltModel(
            mean=_f32(sm.klt.mean),
            basis=_f32(sm.klt.basis),
            eigenvalues=_f32(sm.klt.eigenvalues),
            rank=sm.klt.rank,
        )
        base_sched = channel_schedule(
            float(np.float32(sm.base_sched.q_s)), float(np.float32(sm.base_sched.alpha)), sm.base_sched.n
        )
        base_ent = GaussianEntropyModel(mu=_f32(sm.base_entropy.mu), sigma=_f32(sm.base_entropy.sigma))
        new = StreamModel(config=sm.config, klt=klt, base_sched=base_sched, base_entropy=base_ent)
        if sm.refine is not None:
            new.refine = RefinementModel(
                measure=_f32(sm.refine.measure),
                dictionary=_f32(sm.refine.dictionary),
                step_raw=_f32(sm.refine.step_raw),
                thresh_raw=_f32(sm.refine.thresh_raw),
            )
            new.refine_sched = channel_schedule(
                float(np.float32(sm.refine_sched.q_s)),
                float(np.float32(sm.refine_sched.alpha)),
                sm.refine_sched.n,
            )
            new.refine_entropy = GaussianEntropyModel(
                mu=_f32(sm.refine_entropy.mu), sigma=_f32(sm.refine_entropy.sigma)
            )
        out.append(new)
    return CodecBundle(streams=out)


@dataclass
class StreamPayload:
    """Entropy-coded latents of one stream: (symbol_count, coded_bytes)."""

    latents: list[tuple[int, bytes]]


def _reconstruct_stream(sm: StreamModel, sym_base: np.ndarray, sym_refine) -> np.ndarray:
    theta_hat = quantizer.dequantize(sym_base, sm.base_sched)
    f_base = base_layer.synthesize_base(theta_hat, sm.klt)
    if sm.refine is None:
        return f_base
    y_hat = quantizer.dequantize(sym_refine, sm.refine_sched)
    return f_base + refinement.unfold_synthesize(y_hat, sm.refine)


def encode_stream(sm: StreamModel, xs: np.ndarray) -> tuple[StreamPayload, np.ndarray]:
    theta_p = base_layer.analyze_base(xs, sm.klt)
    sym_base = quantizer.quantize(theta_p, sm.base_sched)
    latents = [(sym_base.size, encode_symbols(sym_base, sm.base_entropy, sm.base_sched))]
    sym_refine = None
    if sm.refine is not None:
        # Measurements take the truncation residual (unquantized base
        # synthesis): the refinement codes what truncation discarded, not the
        # base layer's quantization error.
        f_trunc = base_layer.synthesize_base(theta_p, sm.klt)
        y = refinement.analyze_refine(base_layer.residual(xs, f_trunc), sm.refine)
        sym_refine = quantizer.quantize(y, sm.refine_sched)
        latents.append((sym_refine.size, encode_symbols(sym_refine, sm.refine_entropy, sm.refine_sched)))
    return StreamPayload(latents=latents), _reconstruct_stream(sm, sym_base, sym_refine)


def encode_table(bundle: CodecBundle, x: np.ndarray) -> tuple[list[StreamPayload], np.ndarray]:
    """Quantize and entropy-code every stream; also return the decoder-side
    reconstruction (computed from the coded symbols)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[1] != bundle.dim:
        raise DimMismatch(f"table has {x.shape[1]} columns, bundle expects {bundle.dim}")
    recon = np.zeros_like(x)
    payloads = []
    for sm in bundle.streams:
        payload, rec = encode_stream(sm, x[:, sm.config.col_start : sm.config.col_end])
        payloads.append(payload)
        recon[:, sm.config.col_start : sm.config.col_end] = rec
    return payloads, recon


def decode_table(bundle: CodecBundle, payloads: list[StreamPayload]) -> np.ndarray:
    if len(payloads) != len(bundle.streams):
        raise DimMismatch("payload count does not match stream count")
    columns = []
    rows = None
    for sm, payload in zip(bundle.streams, payloads):
        count, data = payload.latents[0]
        sym_base = decode_symbols(data, count, sm.base_entropy, sm.base_sched)
        sym_refine = None
        if sm.refine is not None:
            count_r, data_r = payload.latents[1]
            sym_refine = decode_symbols(data_r, count_r, sm.refine_entropy, sm.refine_sched)
        rec = _reconstruct_stream(sm, sym_base, sym_refine)
        if rows is None:
            rows = rec.shape[0]
        elif rec.shape[0] != rows:
            raise DimMismatch("streams decode to different row counts")
        columns.append((sm.config.col_start, sm.config.col_end, rec))
    out = np.zeros((rows or 0, bundle.dim))
    for cs, ce, rec in columns:
        out[:, cs:ce] = rec
    return out


def payload_rates(bundle: CodecBundle, payloads: list[StreamPayload]) -> dict:
    """Byte accounting of the coded latents (no container overhead)."""
    per_stream = {}
    for sm, payload in zip(bundle.streams, payloads):
        per_stream[sm.config.name] = sum(len(b) for _, b in payload.latents)
    return {"per_stream": per_stream, "total": sum(per_stream.values())}


def stream_param_floats(sm: StreamModel) -> int:
    """Float count of the transmitted model (mirrors serialization layout)."""
    n = sm.klt.mean.size + sm.klt.eigenvalues.size
    if sm.config.stores_basis:
        n += sm.klt.basis.size
    n += 2 + sm.base_entropy.mu.size + sm.base_entropy.sigma.size
    if sm.refine is not None:
        n += refinement.param_count(sm.refine)
        n += 2 + sm.refine_entropy.mu.size + sm.refine_entropy.sigma.size
    return n


def clone_with(sm: StreamModel, **kw) -> StreamModel:
    return replace(sm, **kw)
