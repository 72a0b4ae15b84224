"""Protocol message payloads and their binary wire codec.

In memory a payload is a small tuple whose first element is the kind
tag; the binary form (1-byte kind tag, big-endian fixed-width integers,
length-prefixed bit strings) is what trace files and payload hashes use.

Kinds:
  REQ    (s,)                    value request, lockstep and self-paced
  REQT   (s, t)                  request carrying the sender's local clock
  RESPV  (s, v)                  bare value report
  RESPL  (s, v, lockdur)         value report with claimed lock duration
  RESPC  (s, blocks, sigma)      chain report with aged-lock prefix
  RESPC2 (s, blocks, sigma, sigma2)  chain report plus safe-lock prefix
  RAW    (bytes,)                adversarial junk, decoded by nobody
"""

from __future__ import annotations

import struct

from snowsim.chainstore import Block

REQ = "REQ"
REQT = "REQT"
RESPV = "RESPV"
RESPL = "RESPL"
RESPC = "RESPC"
RESPC2 = "RESPC2"
RAW = "RAW"

_TAGS = {REQ: 1, REQT: 2, RESPV: 3, RESPL: 4, RESPC: 5, RESPC2: 6, RAW: 0x7F}
_KINDS = {v: k for k, v in _TAGS.items()}


class CodecError(ValueError):
    """Raised when bytes do not decode to a well-formed payload."""


def _pack_bits(bits: str) -> bytes:
    n = len(bits)
    nbytes = (n + 7) // 8
    if n:
        value = int(bits, 2) << (8 * nbytes - n)
        body = value.to_bytes(nbytes, "big")
    else:
        body = b""
    return struct.pack(">I", n) + body


def _unpack_bits(buf: bytes, off: int) -> tuple[str, int]:
    if off + 4 > len(buf):
        raise CodecError("truncated bit-string length")
    (n,) = struct.unpack_from(">I", buf, off)
    off += 4
    nbytes = (n + 7) // 8
    if off + nbytes > len(buf):
        raise CodecError("truncated bit-string body")
    if n == 0:
        return "", off
    value = int.from_bytes(buf[off:off + nbytes], "big") >> (8 * nbytes - n)
    return format(value, f"0{n}b"), off + nbytes


def _pack_block(b: Block) -> bytes:
    parent = b.parent or ""
    return (
        _pack_bits(b.id)
        + _pack_bits(parent)
        + struct.pack(">I", b.height)
        + struct.pack(">I", len(b.payload))
        + b.payload
    )


def _unpack_block(buf: bytes, off: int) -> tuple[Block, int]:
    bid, off = _unpack_bits(buf, off)
    parent, off = _unpack_bits(buf, off)
    if off + 8 > len(buf):
        raise CodecError("truncated block header")
    height, plen = struct.unpack_from(">II", buf, off)
    off += 8
    if off + plen > len(buf):
        raise CodecError("truncated block payload")
    payload = buf[off:off + plen]
    return Block(id=bid, parent=parent or None, height=height, payload=payload), off + plen


def encode_payload(payload: tuple) -> bytes:
    kind = payload[0]
    tag = bytes([_TAGS[kind]])
    if kind == REQ:
        return tag + struct.pack(">I", payload[1])
    if kind == REQT:
        return tag + struct.pack(">Iq", payload[1], payload[2])
    if kind == RESPV:
        return tag + struct.pack(">IB", payload[1], payload[2])
    if kind == RESPL:
        return tag + struct.pack(">IBq", payload[1], payload[2], payload[3])
    if kind in (RESPC, RESPC2):
        s, blocks = payload[1], payload[2]
        out = [tag, struct.pack(">I", s), struct.pack(">H", len(blocks))]
        out.extend(_pack_block(b) for b in blocks)
        out.append(_pack_bits(payload[3]))
        if kind == RESPC2:
            out.append(_pack_bits(payload[4]))
        return b"".join(out)
    if kind == RAW:
        return tag + payload[1]
    raise CodecError(f"unknown payload kind {kind!r}")


def decode_payload(buf: bytes) -> tuple:
    if not buf:
        raise CodecError("empty payload")
    kind = _KINDS.get(buf[0])
    if kind is None:
        raise CodecError(f"unknown tag {buf[0]:#x}")
    try:
        if kind == REQ:
            (s,) = struct.unpack_from(">I", buf, 1)
            return (REQ, s)
        if kind == REQT:
            s, t = struct.unpack_from(">Iq", buf, 1)
            return (REQT, s, t)
        if kind == RESPV:
            s, v = struct.unpack_from(">IB", buf, 1)
            if v not in (0, 1):
                raise CodecError("value bit out of range")
            return (RESPV, s, v)
        if kind == RESPL:
            s, v, dur = struct.unpack_from(">IBq", buf, 1)
            if v not in (0, 1):
                raise CodecError("value bit out of range")
            return (RESPL, s, v, dur)
        if kind in (RESPC, RESPC2):
            (s,) = struct.unpack_from(">I", buf, 1)
            (count,) = struct.unpack_from(">H", buf, 5)
            off = 7
            blocks = []
            for _ in range(count):
                block, off = _unpack_block(buf, off)
                blocks.append(block)
            sigma, off = _unpack_bits(buf, off)
            if kind == RESPC2:
                sigma2, off = _unpack_bits(buf, off)
                return (RESPC2, s, tuple(blocks), sigma, sigma2)
            return (RESPC, s, tuple(blocks), sigma)
        return (RAW, buf[1:])
    except struct.error as exc:
        raise CodecError(str(exc)) from exc
