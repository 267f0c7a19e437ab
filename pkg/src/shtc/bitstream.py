"""Container format: transmitted models (the L(M) side of the description
length) plus entropy-coded payloads (L(D|M)).

Layout (all ints little-endian, floats 32-bit LE; full byte map in
``docs/format.md``):

    header:  magic "SHTC" | version u16 | stream count u16 | reserved u32
             | crc32 of the 12 preceding bytes
    stream:  dims block, model block, payload block
    block:   content length u32 | content | crc32(content)
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .base_layer import KltModel
from .codec import CodecBundle, StreamConfig, StreamModel, StreamPayload, TRANSFORMS
from .entropy import GaussianEntropyModel
from .errors import BadMagic, ChecksumError, DecodeError, VersionUnsupported
from .quantizer import channel_schedule
from .refinement import RefinementModel, param_count

MAGIC = b"SHTC"
VERSION = 1

_DIMS_FMT = "<8sBBHHHHHHHI"


def _f32_bytes(*arrays) -> bytes:
    out = bytearray()
    for a in arrays:
        out += np.asarray(a, dtype="<f4").tobytes()
    return bytes(out)


def _block(content: bytes) -> bytes:
    return struct.pack("<I", len(content)) + content + struct.pack("<I", zlib.crc32(content))


def _dims_content(sm: StreamModel) -> bytes:
    cfg = sm.config
    refine_floats = param_count(sm.refine) if sm.refine is not None else 0
    return struct.pack(
        _DIMS_FMT,
        cfg.name.encode("ascii"),
        TRANSFORMS.index(cfg.transform),
        1 if sm.refine is not None else 0,
        cfg.col_start,
        cfg.col_end,
        cfg.dim,
        cfg.rank,
        cfg.n_meas,
        cfg.atoms,
        cfg.n_layers,
        refine_floats,
    )


def _model_content(sm: StreamModel) -> bytes:
    parts = [sm.klt.mean, sm.klt.eigenvalues]
    if sm.config.stores_basis:
        parts.append(sm.klt.basis)
    parts += [
        [sm.base_sched.q_s, sm.base_sched.alpha],
        sm.base_entropy.mu,
        sm.base_entropy.sigma,
    ]
    if sm.refine is not None:
        parts += [
            sm.refine.measure,
            sm.refine.dictionary,
            sm.refine.step_raw,
            sm.refine.thresh_raw,
            [sm.refine_sched.q_s, sm.refine_sched.alpha],
            sm.refine_entropy.mu,
            sm.refine_entropy.sigma,
        ]
    return _f32_bytes(*parts)


def _payload_content(payload: StreamPayload | None) -> bytes:
    latents = payload.latents if payload is not None else []
    out = bytearray(struct.pack("<I", len(latents)))
    for count, data in latents:
        out += struct.pack("<II", count, len(data))
        out += data
    return bytes(out)


def serialize(bundle: CodecBundle, payloads: list[StreamPayload] | None = None) -> tuple[bytes, dict]:
    """Serialize to bytes; returns (data, {"model_bytes", "payload_bytes"})."""
    if payloads is None:
        payloads = [None] * len(bundle.streams)
    if len(payloads) != len(bundle.streams):
        raise DecodeError("payload list does not match stream count")
    head = struct.pack("<4sHHI", MAGIC, VERSION, len(bundle.streams), 0)
    out = bytearray(head + struct.pack("<I", zlib.crc32(head)))
    model_bytes = 0
    payload_bytes = 0
    for sm, payload in zip(bundle.streams, payloads):
        dims = _dims_content(sm)
        model = _model_content(sm)
        pay = _payload_content(payload)
        model_bytes += len(dims) + len(model)
        payload_bytes += sum(len(d) for _, d in (payload.latents if payload else []))
        out += _block(dims) + _block(model) + _block(pay)
    return bytes(out), {"model_bytes": model_bytes, "payload_bytes": payload_bytes}


def write(bundle: CodecBundle, payloads: list[StreamPayload] | None, path) -> dict:
    data, counts = serialize(bundle, payloads)
    with open(path, "wb") as fh:
        fh.write(data)
    return counts


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise DecodeError("truncated file")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def block(self) -> bytes:
        (length,) = struct.unpack("<I", self.take(4))
        content = self.take(length)
        (crc,) = struct.unpack("<I", self.take(4))
        if zlib.crc32(content) != crc:
            raise ChecksumError("block crc mismatch")
        return content


def _f32_reader(content: bytes):
    arr = np.frombuffer(content, dtype="<f4").astype(np.float64)
    pos = [0]

    def take(shape) -> np.ndarray:
        n = int(np.prod(shape))
        if pos[0] + n > arr.size:
            raise DecodeError("model block too short")
        chunk = arr[pos[0] : pos[0] + n].reshape(shape)
        pos[0] += n
        return chunk.copy()

    return take, lambda: pos[0] == arr.size


def deserialize(data: bytes) -> tuple[CodecBundle, list[StreamPayload]]:
    rd = _Reader(data)
    head = rd.take(12)
    magic, version, n_streams, _ = struct.unpack("<4sHHI", head)
    (crc,) = struct.unpack("<I", rd.take(4))
    if magic != MAGIC:
        raise BadMagic(f"bad magic {magic!r}")
    if zlib.crc32(head) != crc:
        raise ChecksumError("header crc mismatch")
    if version != VERSION:
        raise VersionUnsupported(f"version {version} unsupported (reader knows {VERSION})")
    streams = []
    payloads = []
    for _ in range(n_streams):
        dims = rd.block()
        name, kind, has_ref, cs, ce, dim, rank, n_meas, n_atoms, n_layers, ref_floats = struct.unpack(
            _DIMS_FMT, dims
        )
        cfg = StreamConfig(
            name=name.rstrip(b"\x00").decode("ascii"),
            col_start=cs,
            col_end=ce,
            transform=TRANSFORMS[kind],
            rank=rank,
            n_meas=n_meas,
            n_atoms=n_atoms,
            n_layers=n_layers,
        )
        take, exhausted = _f32_reader(rd.block())
        mean = take(dim)
        evals = take(dim)
        if cfg.stores_basis:
            basis = take((dim, dim))
        else:
            from .codec import _fixed_basis

            basis = _fixed_basis(cfg.transform, dim)
        klt = KltModel(mean=mean, basis=basis, eigenvalues=evals, rank=rank)
        qs, alpha = take(2)
        sm = StreamModel(
            config=cfg,
            klt=klt,
            base_sched=channel_schedule(float(qs), float(alpha), rank),
            base_entropy=GaussianEntropyModel(mu=take(rank), sigma=take(rank)),
        )
        if has_ref:
            sm.refine = RefinementModel(
                measure=take((n_meas, dim)),
                dictionary=take((dim, n_atoms)),
                step_raw=take((n_layers, n_atoms)),
                thresh_raw=take((n_layers, n_atoms)),
            )
            if param_count(sm.refine) != ref_floats:
                raise DecodeError("declared refinement parameter count mismatch")
            qs, alpha = take(2)
            sm.refine_sched = channel_schedule(float(qs), float(alpha), n_meas)
            sm.refine_entropy = GaussianEntropyModel(mu=take(n_meas), sigma=take(n_meas))
        if not exhausted():
            raise DecodeError("model block has trailing floats")
        streams.append(sm)

        pay = _Reader(rd.block())
        (n_latents,) = struct.unpack("<I", pay.take(4))
        latents = []
        for _ in range(n_latents):
            count, nbytes = struct.unpack("<II", pay.take(8))
            latents.append((count, pay.take(nbytes)))
        if pay.pos != len(pay.data):
            raise DecodeError("payload block has trailing bytes")
        payloads.append(StreamPayload(latents=latents))
    if rd.pos != len(rd.data):
        raise DecodeError("file has trailing bytes")
    return CodecBundle(streams=streams), payloads


def read(path) -> tuple[CodecBundle, list[StreamPayload]]:
    with open(path, "rb") as fh:
        return deserialize(fh.read())


def mdl_report(path) -> dict:
    """Per-stream and total description-length split, from a written file."""
    with open(path, "rb") as fh:
        data = fh.read()
    bundle, payloads = deserialize(data)
    per_stream = []
    model_total = 0
    payload_total = 0
    rows = None
    for sm, payload in zip(bundle.streams, payloads):
        m = len(_dims_content(sm)) + len(_model_content(sm))
        p = sum(len(d) for _, d in payload.latents)
        if payload.latents and rows is None:
            rows = payload.latents[0][0] // sm.config.rank
        per_stream.append(
            {"stream": sm.config.name, "model_bytes": m, "payload_bytes": p}
        )
        model_total += m
        payload_total += p
    report = {
        "streams": per_stream,
        "model_bytes": model_total,
        "payload_bytes": payload_total,
        "file_bytes": len(data),
        "container_overhead": len(data) - model_total - payload_total,
        "rows": rows,
        "bits_per_row": (len(data) * 8.0 / rows) if rows else None,
    }
    return report
