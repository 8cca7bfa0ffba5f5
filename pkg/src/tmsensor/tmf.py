"""Traffic matrix file (TMF) codec.

A TMF file is a concatenation of independent blocks, one per matrix:

    +----------------------------+
    | 64-byte header (LE fields) |  magic "GTM1", version, flags,
    +----------------------------+  window/packet counts, time range,
    | payload (payload_len bytes)|  key_id, scheme, entry_count,
    +----------------------------+  payload_len

The payload lists entries in ascending (row, col) order as
(row_delta, col, count) triples of unsigned LEB128 varints: row_delta is the
difference from the previous entry's row (the first row is emitted absolute),
col and count are absolute. The varint stream is then deflate-compressed
(RFC 1951) unless flag bit 0 is cleared.

Writing is canonical: the same matrix sequence always produces identical
bytes, so files can be compared and deduplicated byte-wise. Blocks are
skippable without decompression via header payload_len alone.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from fractions import Fraction
from typing import BinaryIO, Iterable, Iterator, NamedTuple

from .errors import (
    BadMagic,
    CorruptPayload,
    InvariantViolation,
    MixedKeys,
    MixedWindowSizes,
    UnknownScheme,
    UnknownVersion,
)
from .matrix import TrafficMatrix

MAGIC = b"GTM1"
FORMAT_VERSION = 1
FLAG_DEFLATE = 0x0001
ANON_SCHEME_HMAC_SHA256_64 = 1

# magic, version, flags, window_size, packet_count, start_time_us,
# end_time_us, key_id, anon_scheme, reserved, entry_count, payload_len
_HEADER = struct.Struct("<4sHHIQQQ8sB3sQQ")
HEADER_LEN = _HEADER.size
assert HEADER_LEN == 64

# Pinned so output stays canonical; payloads are small, so level 9 is cheap.
_DEFLATE_LEVEL = 9

# Upper bound on varint bytes per (row_delta, col, count) triple.
_MAX_TRIPLE_LEN = 30


class TmfBlockHeader(NamedTuple):
    """Parsed fixed header of one block."""

    window_size: int
    packet_count: int
    start_time_us: int
    end_time_us: int
    key_id: bytes
    flags: int
    entry_count: int
    payload_len: int


def write_tmf(
    matrices: Iterable[TrafficMatrix], sink: BinaryIO, *, compress: bool = True
) -> int:
    """Serialize matrices to a TMF byte stream; returns bytes written.

    All matrices must share key_id and window_size. I/O failures propagate
    as the underlying OSError.
    """
    ref_key = None
    ref_window = None
    total = 0
    for m in matrices:
        if ref_key is None:
            ref_key, ref_window = m.key_id, m.window_size
        elif m.key_id != ref_key:
            raise MixedKeys("matrices in one file must share a key")
        elif m.window_size != ref_window:
            raise MixedWindowSizes("matrices in one file must share a window size")
        m.validate()

        raw = _encode_entries(m.sorted_entries())
        if compress:
            payload = _deflate(raw)
            flags = FLAG_DEFLATE
        else:
            payload = raw
            flags = 0
        header = _HEADER.pack(
            MAGIC,
            FORMAT_VERSION,
            flags,
            m.window_size,
            m.packet_count,
            m.start_time_us,
            m.end_time_us,
            m.key_id,
            ANON_SCHEME_HMAC_SHA256_64,
            b"\x00\x00\x00",
            len(m.entries),
            len(payload),
        )
        sink.write(header)
        sink.write(payload)
        total += HEADER_LEN + len(payload)
    return total


def read_tmf(source: BinaryIO) -> list[TrafficMatrix]:
    """Parse a TMF byte stream back into matrices, validating every block."""
    matrices = []
    first = True
    while True:
        header = source.read(HEADER_LEN)
        if not header and not first:
            return matrices
        fields = _parse_header(header, first)
        first = False

        payload = source.read(fields[-1])
        if len(payload) < fields[-1]:
            raise CorruptPayload("file ends inside a block payload")
        matrices.append(_decode_block(fields, payload))


def iter_block_headers(source: BinaryIO) -> Iterator[TmfBlockHeader]:
    """Scan block headers without decoding payloads (forward skip only)."""
    first = True
    while True:
        header = source.read(HEADER_LEN)
        if not header and not first:
            return
        (_, flags, window_size, packet_count, start, end, key_id, _, entry_count,
         payload_len) = _parse_header(header, first)
        first = False
        skipped = source.read(payload_len)
        if len(skipped) < payload_len:
            raise CorruptPayload("file ends inside a block payload")
        yield TmfBlockHeader(
            window_size, packet_count, start, end, key_id, flags, entry_count,
            payload_len,
        )


def _parse_header(header: bytes, first: bool):
    if len(header) < HEADER_LEN:
        if first and (len(header) < 4 or header[:4] != MAGIC):
            raise BadMagic(
                f"not a traffic matrix file (magic {header[:4].hex() or 'empty'})"
            )
        raise CorruptPayload("file ends inside a block header")
    (magic, version, flags, window_size, packet_count, start, end, key_id,
     scheme, reserved, entry_count, payload_len) = _HEADER.unpack(header)
    if magic != MAGIC:
        if first:
            raise BadMagic(f"not a traffic matrix file (magic {magic.hex()})")
        raise CorruptPayload(f"bad block magic {magic.hex()}")
    if version != FORMAT_VERSION:
        raise UnknownVersion(f"format version {version} is not supported")
    if scheme != ANON_SCHEME_HMAC_SHA256_64:
        raise UnknownScheme(f"anonymization scheme {scheme} is not recognized")
    if flags & ~FLAG_DEFLATE:
        raise CorruptPayload(f"reserved flag bits set ({flags:#06x})")
    if reserved != b"\x00\x00\x00":
        raise CorruptPayload("reserved header bytes are not zero")
    return (
        version, flags, window_size, packet_count, start, end, key_id,
        scheme, entry_count, payload_len,
    )


def _decode_block(fields, payload: bytes) -> TrafficMatrix:
    (_, flags, window_size, packet_count, start, end, key_id, _, entry_count,
     _) = fields
    if flags & FLAG_DEFLATE:
        raw = _inflate(payload, entry_count * _MAX_TRIPLE_LEN)
    else:
        raw = payload
    entries = _decode_entries(raw, entry_count)
    m = TrafficMatrix(window_size, packet_count, start, end, key_id, entries)
    m.validate()  # raises InvariantViolation on count/time inconsistency
    return m


def _encode_entries(sorted_entries) -> bytes:
    out = bytearray()
    prev_row = 0
    for (row, col), count in sorted_entries:
        _encode_uvarint(out, row - prev_row)
        _encode_uvarint(out, col)
        _encode_uvarint(out, count)
        prev_row = row
    return bytes(out)


def _decode_entries(raw: bytes, entry_count: int) -> dict[tuple[int, int], int]:
    entries: dict[tuple[int, int], int] = {}
    pos = 0
    row = 0
    prev = None
    for _ in range(entry_count):
        delta, pos = _decode_uvarint(raw, pos)
        col, pos = _decode_uvarint(raw, pos)
        count, pos = _decode_uvarint(raw, pos)
        row += delta
        if row >= 1 << 64:
            raise CorruptPayload("row coordinate overflows 64 bits")
        if prev is not None and (row, col) <= prev:
            raise CorruptPayload("entries are not strictly increasing")
        if count == 0:
            raise InvariantViolation("entry with zero count")
        entries[(row, col)] = count
        prev = (row, col)
    if pos != len(raw):
        raise CorruptPayload(f"{len(raw) - pos} trailing payload bytes")
    return entries


def _encode_uvarint(out: bytearray, value: int) -> None:
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return


def _decode_uvarint(buf: bytes, pos: int) -> tuple[int, int]:
    result = 0
    shift = 0
    while True:
        if pos >= len(buf):
            raise CorruptPayload("varint runs past end of payload")
        byte = buf[pos]
        pos += 1
        result |= (byte & 0x7F) << shift
        if not byte & 0x80:
            if result >= 1 << 64:
                raise CorruptPayload("varint exceeds 64 bits")
            return result, pos
        shift += 7
        if shift > 63:
            raise CorruptPayload("varint longer than 10 bytes")


def _deflate(data: bytes) -> bytes:
    comp = zlib.compressobj(_DEFLATE_LEVEL, zlib.DEFLATED, -15)
    return comp.compress(data) + comp.flush()


def _inflate(data: bytes, max_out: int) -> bytes:
    decomp = zlib.decompressobj(-15)
    try:
        raw = decomp.decompress(data, max_out + 1)
    except zlib.error as exc:
        raise CorruptPayload(f"deflate stream invalid: {exc}") from exc
    if len(raw) > max_out:
        raise CorruptPayload("payload inflates beyond its declared entry count")
    if not decomp.eof:
        raise CorruptPayload("deflate stream is incomplete")
    if decomp.unused_data:
        raise CorruptPayload("trailing bytes after deflate stream")
    return raw


@dataclass(frozen=True)
class CompressionReport:
    """Input sizes plus their exact ratio."""

    pcap_bytes: int
    tmf_bytes: int

    @property
    def ratio(self) -> Fraction:
        return Fraction(self.pcap_bytes, self.tmf_bytes)


def compression_report(pcap_bytes: int, tmf_bytes: int) -> CompressionReport:
    """How much smaller the matrix file is than its source capture."""
    if pcap_bytes < 0 or tmf_bytes < 0:
        raise ValueError("sizes must be non-negative")
    if tmf_bytes == 0:
        raise ValueError("tmf_bytes must be positive")
    return CompressionReport(pcap_bytes, tmf_bytes)


def tmf_filename(prefix: str, epoch_hour: int, seq: int) -> str:
    """Output naming convention: <prefix>-<unix_epoch_hour>-<seq>.tmf."""
    return f"{prefix}-{epoch_hour}-{seq:03d}.tmf"
