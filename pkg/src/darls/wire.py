"""Framed binary codec for coordinator/worker messages.

Frame layout (lengths in bytes):

    length   u32 big-endian, counts everything after itself (version +
             kind + payload), so a frame occupies length + 4 bytes total
    version  u8, currently 0x01
    kind     u8, see KIND_CODES
    payload  length - 2 bytes, kind-specific

Payload primitives:

    u32      big-endian unsigned 32-bit
    f64      IEEE-754 double, little-endian
    matrix   rows u32, cols u32, then rows*cols f64 row-major
    perm     p u32, then p u32 indices
    support  p u32, then ceil(p*p/8) bytes of row-major bits, MSB first
    string   byte length u32, then UTF-8 bytes
    proxcfg  s0 f64, kappa f64, tol f64, max_iter u32

Matrices containing NaN are rejected at decode time; Error is the only
message allowed to describe non-finite values (as text).
"""

import struct
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .prox import ProxConfig

VERSION = 0x01
MAX_BODY = 64 * 1024 * 1024  # version + kind + payload

KIND_CODES = {
    "Hello": 1,
    "HelloAck": 2,
    "SetConfig": 3,
    "GradRequest": 4,
    "GradReply": 5,
    "SolveRequest": 6,
    "SolveReply": 7,
    "ScoreRequest": 8,
    "ScoreReply": 9,
    "Shutdown": 10,
    "Error": 11,
}
CODE_KINDS = {v: k for k, v in KIND_CODES.items()}

# Every request kind elicits exactly one reply kind (or Error).  HelloAck
# doubles as the generic acknowledgement for session-control requests.
REPLY_FOR = {
    "Hello": "HelloAck",
    "SetConfig": "HelloAck",
    "GradRequest": "GradReply",
    "SolveRequest": "SolveReply",
    "ScoreRequest": "ScoreReply",
    "Shutdown": "HelloAck",
}

FAMILY_CODES = {"gaussian": 0, "logistic": 1, "poisson": 2}
CODE_FAMILIES = {v: k for k, v in FAMILY_CODES.items()}

# Error codes carried in Error payloads.
ERR_MALFORMED = 1
ERR_VERSION = 2
ERR_OVERSIZE = 3
ERR_CONFIG = 10
ERR_UNEXPECTED = 11
ERR_COMPUTE = 12


class CodecError(Exception):
    """Raised for any frame that cannot be decoded."""

    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


@dataclass
class WireMessage:
    kind: str
    fields: dict[str, Any] = field(default_factory=dict)

    def __getitem__(self, key):
        return self.fields[key]


def messages_equal(a: WireMessage, b: WireMessage) -> bool:
    """Structural equality, comparing arrays by value."""
    if a.kind != b.kind or a.fields.keys() != b.fields.keys():
        return False
    for key, va in a.fields.items():
        vb = b.fields[key]
        if isinstance(va, np.ndarray) or isinstance(vb, np.ndarray):
            if not (np.asarray(va).shape == np.asarray(vb).shape
                    and np.array_equal(va, vb)):
                return False
        elif va != vb:
            return False
    return True


# --- primitive packers ------------------------------------------------------

def _pack_u32(value: int) -> bytes:
    if not 0 <= value <= 0xFFFFFFFF:
        raise CodecError(ERR_MALFORMED, f"u32 out of range: {value}")
    return struct.pack(">I", value)


def _pack_f64(value: float) -> bytes:
    return struct.pack("<d", float(value))


def _pack_matrix(mat) -> bytes:
    mat = np.ascontiguousarray(mat, dtype=np.float64)
    if mat.ndim != 2:
        raise CodecError(ERR_MALFORMED, "matrix payload must be 2-d")
    rows, cols = mat.shape
    return _pack_u32(rows) + _pack_u32(cols) + mat.astype("<f8").tobytes()


def _pack_perm(perm) -> bytes:
    perm = np.asarray(perm, dtype=np.int64)
    return _pack_u32(perm.size) + struct.pack(f">{perm.size}I", *perm.tolist())


def _pack_support(support) -> bytes:
    support = np.asarray(support, dtype=bool)
    p = support.shape[0]
    bits = np.packbits(support.reshape(-1), bitorder="big")
    return _pack_u32(p) + bits.tobytes()


def _pack_str(text: str) -> bytes:
    raw = text.encode("utf-8")
    return _pack_u32(len(raw)) + raw


def _pack_proxcfg(cfg: ProxConfig) -> bytes:
    return (_pack_f64(cfg.s0) + _pack_f64(cfg.kappa)
            + _pack_f64(cfg.tol) + _pack_u32(cfg.max_iter))


class _Reader:
    """Bounds-checked cursor over a payload buffer."""

    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.buf):
            raise CodecError(ERR_MALFORMED, "truncated payload")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack(">I", self.take(4))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self.take(8))[0]

    def matrix(self) -> np.ndarray:
        rows = self.u32()
        cols = self.u32()
        count = rows * cols
        if count * 8 > len(self.buf) - self.pos:
            raise CodecError(ERR_MALFORMED, "matrix larger than payload")
        mat = np.frombuffer(self.take(count * 8), dtype="<f8").reshape(rows, cols)
        mat = mat.astype(np.float64)
        if np.isnan(mat).any():
            raise CodecError(ERR_MALFORMED, "matrix payload contains NaN")
        return mat

    def perm(self) -> np.ndarray:
        p = self.u32()
        if p * 4 > len(self.buf) - self.pos:
            raise CodecError(ERR_MALFORMED, "permutation larger than payload")
        values = np.asarray(struct.unpack(f">{p}I", self.take(4 * p)), dtype=np.int64)
        if p == 0 or values.max() >= p or np.unique(values).size != p:
            raise CodecError(ERR_MALFORMED, "payload is not a permutation")
        return values

    def support(self) -> np.ndarray:
        p = self.u32()
        nbytes = (p * p + 7) // 8
        if nbytes > len(self.buf) - self.pos:
            raise CodecError(ERR_MALFORMED, "support larger than payload")
        bits = np.unpackbits(np.frombuffer(self.take(nbytes), dtype=np.uint8),
                             count=p * p, bitorder="big")
        return bits.reshape(p, p).astype(bool)

    def string(self) -> str:
        n = self.u32()
        try:
            return self.take(n).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CodecError(ERR_MALFORMED, f"bad UTF-8 string: {exc}") from None

    def proxcfg(self) -> ProxConfig:
        s0, kappa, tol = self.f64(), self.f64(), self.f64()
        max_iter = self.u32()
        try:
            return ProxConfig(s0=s0, kappa=kappa, tol=tol, max_iter=max_iter)
        except ValueError as exc:
            raise CodecError(ERR_MALFORMED, f"bad solver config: {exc}") from None

    def finish(self) -> None:
        if self.pos != len(self.buf):
            raise CodecError(ERR_MALFORMED, "trailing bytes after payload")


# --- per-kind payload codecs -------------------------------------------------

def _payload_of(msg: WireMessage) -> bytes:
    f = msg.fields
    kind = msg.kind
    if kind in ("Hello", "Shutdown"):
        return b""
    if kind == "HelloAck":
        return _pack_u32(f["n"]) + _pack_u32(f["p"])
    if kind == "SetConfig":
        family = f["family"]
        if family not in FAMILY_CODES:
            raise CodecError(ERR_MALFORMED, f"unknown family {family!r}")
        return bytes([FAMILY_CODES[family]])
    if kind == "GradRequest":
        return _pack_matrix(f["beta"])
    if kind == "GradReply":
        return _pack_matrix(f["grad"]) + _pack_u32(f["n"])
    if kind == "SolveRequest":
        return (_pack_matrix(f["beta"]) + _pack_matrix(f["global_grad"])
                + _pack_support(f["support"]) + _pack_f64(f["lam"])
                + _pack_proxcfg(f["cfg"]))
    if kind == "SolveReply":
        return _pack_matrix(f["beta"])
    if kind == "ScoreRequest":
        return _pack_matrix(f["beta"]) + _pack_f64(f["lam"])
    if kind == "ScoreReply":
        return _pack_f64(f["value"])
    if kind == "Error":
        return _pack_u32(f["code"]) + _pack_str(f["message"])
    raise CodecError(ERR_MALFORMED, f"unknown message kind {kind!r}")


def _fields_from(kind: str, reader: _Reader) -> dict:
    if kind in ("Hello", "Shutdown"):
        return {}
    if kind == "HelloAck":
        return {"n": reader.u32(), "p": reader.u32()}
    if kind == "SetConfig":
        code = reader.take(1)[0]
        if code not in CODE_FAMILIES:
            raise CodecError(ERR_MALFORMED, f"unknown family code {code}")
        return {"family": CODE_FAMILIES[code]}
    if kind == "GradRequest":
        return {"beta": reader.matrix()}
    if kind == "GradReply":
        return {"grad": reader.matrix(), "n": reader.u32()}
    if kind == "SolveRequest":
        return {"beta": reader.matrix(), "global_grad": reader.matrix(),
                "support": reader.support(), "lam": reader.f64(),
                "cfg": reader.proxcfg()}
    if kind == "SolveReply":
        return {"beta": reader.matrix()}
    if kind == "ScoreRequest":
        return {"beta": reader.matrix(), "lam": reader.f64()}
    if kind == "ScoreReply":
        return {"value": reader.f64()}
    if kind == "Error":
        return {"code": reader.u32(), "message": reader.string()}
    raise CodecError(ERR_MALFORMED, f"unknown message kind {kind!r}")


def encode(msg: WireMessage) -> bytes:
    """Serialize a message into one complete frame."""
    if msg.kind not in KIND_CODES:
        raise CodecError(ERR_MALFORMED, f"unknown message kind {msg.kind!r}")
    payload = _payload_of(msg)
    length = len(payload) + 2
    if length > MAX_BODY:
        raise CodecError(ERR_OVERSIZE, f"payload of {len(payload)} bytes exceeds limit")
    return struct.pack(">I", length) + bytes([VERSION, KIND_CODES[msg.kind]]) + payload


def decode(frame: bytes) -> WireMessage:
    """Parse one complete frame; raises CodecError on any malformed input."""
    if not isinstance(frame, (bytes, bytearray, memoryview)):
        raise CodecError(ERR_MALFORMED, "frame must be bytes")
    frame = bytes(frame)
    if len(frame) < 4:
        raise CodecError(ERR_MALFORMED, "frame shorter than its header")
    (length,) = struct.unpack(">I", frame[:4])
    if length > MAX_BODY:
        raise CodecError(ERR_OVERSIZE, f"frame body of {length} bytes exceeds limit")
    if length < 2:
        raise CodecError(ERR_MALFORMED, "frame body must hold version and kind")
    if len(frame) != 4 + length:
        raise CodecError(ERR_MALFORMED,
                         f"frame length field {length} does not match {len(frame) - 4} body bytes")
    version = frame[4]
    if version != VERSION:
        raise CodecError(ERR_VERSION, f"unsupported protocol version {version:#04x}")
    kind_code = frame[5]
    if kind_code not in CODE_KINDS:
        raise CodecError(ERR_MALFORMED, f"unknown kind byte {kind_code:#04x}")
    kind = CODE_KINDS[kind_code]
    reader = _Reader(frame[6:])
    try:
        fields = _fields_from(kind, reader)
    except CodecError:
        raise
    except Exception as exc:  # defensive: arbitrary bytes must never abort
        raise CodecError(ERR_MALFORMED, f"undecodable payload: {exc}") from None
    reader.finish()
    return WireMessage(kind, fields)


def error_message(code: int, message: str) -> WireMessage:
    return WireMessage("Error", {"code": code, "message": message})
