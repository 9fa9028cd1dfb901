"""Binary container for a database of compressed objects.

Little-endian layout::

    "CMN1" | tag u8 | count u64
    per record: n u32 | s u32 | positions u32[s] | values | e f64 | norm_sq f64
    crc32 u32 over everything above

``values`` are (re, im) f64 pairs for DFT records and plain f64 for Haar.
The tag packs the basis (bits 0-1), the half-spectrum flag (bit 2) and the
first-coefficients flag (bit 3, the magnitude floor is no ceiling); a
database shares one tag.  Optional blocks may follow the trailer, each
``magic[4] | length u64 | payload | crc32`` (the VP-tree uses ``"VPT1"``).
"""
from __future__ import annotations

import struct
import zlib
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .compress import CompressedSeq
from .errors import (BadMagicError, ChecksumError, ConsistencyError, InvalidInputError,
                     TruncatedError)
from .transform import Basis

MAGIC = b"CMN1"
TREE_MAGIC = b"VPT1"
_HEAD = struct.Struct("<4sBQ")
_REC = struct.Struct("<II")
_TAIL = struct.Struct("<dd")
_CRC = struct.Struct("<I")
_BLOCK = struct.Struct("<4sQ")

SYM_BIT = 0x4
FIRST_BIT = 0x8


def _tag(basis: Basis, symmetric: bool, floor_valid: bool) -> int:
    return int(basis) | (SYM_BIT if symmetric else 0) | (0 if floor_valid else FIRST_BIT)


def _untag(tag: int):
    if tag & ~(0x3 | SYM_BIT | FIRST_BIT):
        raise ConsistencyError(f"unknown tag bits {tag:#x}")
    try:
        basis = Basis(tag & 0x3)
    except ValueError:
        raise ConsistencyError(f"unknown basis tag {tag & 0x3}") from None
    return basis, bool(tag & SYM_BIT), not (tag & FIRST_BIT)


def _db_tag(db: Sequence[CompressedSeq], basis=None) -> int:
    if not db:
        return _tag(Basis.parse(basis) if basis is not None else Basis.DFT, True, True)
    tags = {_tag(c.basis, c.symmetric, c.floor_valid) for c in db}
    if len(tags) != 1:
        raise InvalidInputError("all records in a database must share basis and compression kind")
    return tags.pop()


def _encode_db(db: Sequence[CompressedSeq], basis=None) -> bytes:
    tag = _db_tag(db, basis)
    parts = [_HEAD.pack(MAGIC, tag, len(db))]
    for c in db:
        parts.append(_REC.pack(c.n, c.s))
        parts.append(c.positions.astype("<u4").tobytes())
        if c.basis == Basis.HAAR:
            parts.append(c.values.astype("<f8").tobytes())
        else:
            parts.append(c.values.astype("<c16").tobytes())
        parts.append(_TAIL.pack(c.residual_energy, c.norm_sq))
    body = b"".join(parts)
    return body + _CRC.pack(zlib.crc32(body))


def serialize(db: Sequence[CompressedSeq], basis=None,
              blocks: Optional[Dict[bytes, bytes]] = None) -> bytes:
    """Encode ``db``; ``basis`` only matters for the tag of an empty database."""
    out = [_encode_db(db, basis)]
    for magic, payload in (blocks or {}).items():
        if len(magic) != 4:
            raise InvalidInputError("block magic must be 4 bytes")
        head = _BLOCK.pack(magic, len(payload))
        out.append(head + payload + _CRC.pack(zlib.crc32(head + payload)))
    return b"".join(out)


class _Reader:
    def __init__(self, data: bytes, pos: int = 0):
        self.data = data
        self.pos = pos

    def take(self, k: int) -> memoryview:
        if self.pos + k > len(self.data):
            raise TruncatedError(f"need {k} bytes at offset {self.pos}, have {len(self.data) - self.pos}")
        view = memoryview(self.data)[self.pos:self.pos + k]
        self.pos += k
        return view


def _decode_db(data: bytes) -> Tuple[List[CompressedSeq], int]:
    if len(data) < 4 and MAGIC.startswith(bytes(data)):
        raise TruncatedError("file ends inside the magic number")
    if bytes(data[:4]) != MAGIC:
        raise BadMagicError("not a compressed database (bad magic)")
    if len(data) < _HEAD.size + _CRC.size:
        raise TruncatedError("file shorter than header and checksum")
    rd = _Reader(data)
    _, tag, count = _HEAD.unpack(rd.take(_HEAD.size))
    basis, symmetric, floor_valid = _untag(tag)
    vsize = 8 if basis == Basis.HAAR else 16
    vdtype = "<f8" if basis == Basis.HAAR else "<c16"
    raw = []
    for _ in range(count):
        n, s = _REC.unpack(rd.take(_REC.size))
        pos = np.frombuffer(rd.take(4 * s), dtype="<u4")
        vals = np.frombuffer(rd.take(vsize * s), dtype=vdtype)
        e, norm_sq = _TAIL.unpack(rd.take(_TAIL.size))
        raw.append((n, pos, vals, e, norm_sq))
    end = rd.pos
    (crc,) = _CRC.unpack(rd.take(_CRC.size))
    if zlib.crc32(memoryview(data)[:end]) != crc:
        raise ChecksumError("database checksum mismatch")

    db = []
    for i, (n, pos, vals, e, norm_sq) in enumerate(raw):
        try:
            c = CompressedSeq(int(n), basis, pos.astype(np.int64), vals.copy(), e, norm_sq,
                              symmetric, floor_valid)
        except InvalidInputError as exc:
            raise ConsistencyError(f"record {i}: {exc}") from None
        if not c.check_consistency():
            raise ConsistencyError(f"record {i}: norm_sq disagrees with values + residual")
        db.append(c)
    return db, rd.pos


def read_container(data: bytes) -> Tuple[List[CompressedSeq], Dict[bytes, bytes]]:
    """Database plus any trailing blocks keyed by their magic."""
    db, pos = _decode_db(data)
    blocks = {}
    rd = _Reader(data, pos)
    while rd.pos < len(data):
        start = rd.pos
        magic, length = _BLOCK.unpack(rd.take(_BLOCK.size))
        payload = bytes(rd.take(length))
        (crc,) = _CRC.unpack(rd.take(_CRC.size))
        if zlib.crc32(memoryview(data)[start:start + _BLOCK.size + length]) != crc:
            raise ChecksumError(f"checksum mismatch in block {magic!r}")
        blocks[bytes(magic)] = payload
    return db, blocks


def deserialize(data: bytes) -> List[CompressedSeq]:
    return read_container(data)[0]


def save(path, db, basis=None, blocks=None) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize(db, basis, blocks))


def load(path):
    with open(path, "rb") as fh:
        return read_container(fh.read())
