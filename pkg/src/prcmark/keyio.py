"""Key container: versioned binary "PRCK" format plus a JSON debug sidecar.

Binary layout (all integers little-endian):
  magic "PRCK" | version u16 | flags u16 |
  n u32 | k_msg u32 | k_pad u32 | r u32 | g u32 | t u16 | pad u16 |
  max_bp_iters u32 | eta f64 | fpr f64 | llr_clamp f64 |
  rng_seed u64 | schedule_seed u64 | schedule_len u32 | key_id 16s |
  parity bits, row-major, r x ceil(n/8) |
  generator bits, row-major, n x ceil(g/8) |
  pivot rows, g x u32 |
  otp bits, ceil(n/8)
"""

from __future__ import annotations

import base64
import json
import struct

import numpy as np

from . import gf2
from .errors import FormatError
from .prc import PrcKey, PrcParams

_MAGIC = b"PRCK"
_VERSION = 1
_HEADER = "<4sHH5IHHIdddQQI16s"


def save_key(path, key: PrcKey) -> None:
    p = key.params
    header = struct.pack(
        _HEADER,
        _MAGIC,
        _VERSION,
        0,
        p.n,
        p.k_msg,
        p.k_pad,
        p.r,
        key.g,
        p.t,
        0,
        p.max_bp_iters,
        p.eta,
        p.fpr,
        p.llr_clamp,
        key.rng_seed & (2**64 - 1),
        key.schedule_seed & (2**64 - 1),
        key.schedule_len,
        key.key_id.encode("ascii")[:16].ljust(16, b"\0"),
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(_parity_bytes(key).tobytes())
        fh.write(_generator_row_major(key).tobytes())
        fh.write(key.pivot_rows.astype("<u4").tobytes())
        fh.write(np.packbits(key.otp).tobytes())


def _parity_bytes(key: PrcKey) -> np.ndarray:
    from .prc import _pack_parity

    return _pack_parity(key.parity_cols, key.params.n)


def _generator_row_major(key: PrcKey) -> np.ndarray:
    bits = gf2.unpack_rows(key.gen_cols, key.params.n)  # (g, n)
    return gf2.pack_rows(np.ascontiguousarray(bits.T))  # (n, ceil(g/8))


def _parity_cols_from_bits(parity_packed: np.ndarray, n: int, r: int, t: int) -> np.ndarray:
    cols = np.zeros((r, t), dtype=np.int32)
    step = max(1, (1 << 24) // max(1, n))
    for lo in range(0, r, step):
        block = gf2.unpack_rows(parity_packed[lo : lo + step], n)
        for i, row in enumerate(block):
            nz = np.nonzero(row)[0]
            if nz.shape[0] != t:
                raise FormatError(
                    f"parity row {lo + i} has weight {nz.shape[0]}, expected {t}"
                )
            cols[lo + i] = nz
    return cols


def load_key(path) -> PrcKey:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:1] == b"{":
        return _load_json(blob)
    size = struct.calcsize(_HEADER)
    if len(blob) < size or blob[:4] != _MAGIC:
        raise FormatError("not a PRCK container")
    (
        _,
        version,
        _flags,
        n,
        k_msg,
        k_pad,
        r,
        g,
        t,
        _pad,
        max_bp_iters,
        eta,
        fpr,
        llr_clamp,
        rng_seed,
        schedule_seed,
        schedule_len,
        key_id,
    ) = struct.unpack_from(_HEADER, blob)
    if version != _VERSION:
        raise FormatError(f"unsupported PRCK version {version}")
    wn = gf2.packed_width(n)
    wg = gf2.packed_width(g)
    off = size
    parity_packed = _take(blob, off, r * wn).reshape(r, wn)
    off += r * wn
    gen_rows = _take(blob, off, n * wg).reshape(n, wg)
    off += n * wg
    pivot = np.frombuffer(blob, dtype="<u4", count=g, offset=off).astype(np.int64)
    off += 4 * g
    otp_packed = _take(blob, off, wn)
    off += wn
    if off != len(blob):
        raise FormatError("trailing bytes in PRCK container")
    params = PrcParams(
        n=n, k_msg=k_msg, k_pad=k_pad, r=r, t=t, eta=eta, fpr=fpr,
        max_bp_iters=max_bp_iters, llr_clamp=llr_clamp,
    )
    gen_cols = gf2.pack_rows(np.ascontiguousarray(gf2.unpack_rows(gen_rows, g).T))
    return PrcKey(
        params=params,
        parity_cols=_parity_cols_from_bits(parity_packed, n, r, t),
        gen_cols=gen_cols,
        pivot_rows=pivot,
        otp=gf2.unpack_rows(otp_packed, n).ravel(),
        key_id=key_id.rstrip(b"\0").decode("ascii"),
        rng_seed=int(rng_seed),
        schedule_seed=int(schedule_seed),
        schedule_len=int(schedule_len),
    )


def _take(blob: bytes, off: int, count: int) -> np.ndarray:
    if off + count > len(blob):
        raise FormatError("truncated PRCK container")
    return np.frombuffer(blob, dtype=np.uint8, count=count, offset=off).copy()


def save_key_json(path, key: PrcKey) -> None:
    p = key.params
    obj = {
        "format": "prck-json",
        "version": _VERSION,
        "params": {
            "n": p.n, "k_msg": p.k_msg, "k_pad": p.k_pad, "r": p.r, "t": p.t,
            "eta": p.eta, "fpr": p.fpr, "max_bp_iters": p.max_bp_iters,
            "llr_clamp": p.llr_clamp,
        },
        "g": key.g,
        "key_id": key.key_id,
        "rng_seed": key.rng_seed,
        "schedule_seed": key.schedule_seed,
        "schedule_len": key.schedule_len,
        "parity_b64": base64.b64encode(_parity_bytes(key).tobytes()).decode(),
        "generator_b64": base64.b64encode(_generator_row_major(key).tobytes()).decode(),
        "pivot_rows": [int(x) for x in key.pivot_rows],
        "otp_b64": base64.b64encode(np.packbits(key.otp).tobytes()).decode(),
    }
    with open(path, "w") as fh:
        json.dump(obj, fh)


def _load_json(blob: bytes) -> PrcKey:
    try:
        obj = json.loads(blob)
    except json.JSONDecodeError as exc:
        raise FormatError(f"malformed JSON key: {exc}") from exc
    if obj.get("format") != "prck-json":
        raise FormatError("JSON key missing format marker 'prck-json'")
    pp = obj["params"]
    params = PrcParams(**pp)
    n, g = params.n, int(obj["g"])
    wn, wg = gf2.packed_width(n), gf2.packed_width(g)
    parity_packed = np.frombuffer(
        base64.b64decode(obj["parity_b64"]), dtype=np.uint8
    ).reshape(params.r, wn)
    gen_rows = np.frombuffer(
        base64.b64decode(obj["generator_b64"]), dtype=np.uint8
    ).reshape(n, wg)
    otp_packed = np.frombuffer(base64.b64decode(obj["otp_b64"]), dtype=np.uint8)
    gen_cols = gf2.pack_rows(np.ascontiguousarray(gf2.unpack_rows(gen_rows, g).T))
    return PrcKey(
        params=params,
        parity_cols=_parity_cols_from_bits(parity_packed, n, params.r, params.t),
        gen_cols=gen_cols,
        pivot_rows=np.asarray(obj["pivot_rows"], dtype=np.int64),
        otp=gf2.unpack_rows(otp_packed, n).ravel(),
        key_id=obj["key_id"],
        rng_seed=int(obj["rng_seed"]),
        schedule_seed=int(obj.get("schedule_seed", 0)),
        schedule_len=int(obj.get("schedule_len", 256)),
    )
