"""Frame layout, wire-cost model and the coded AWGN link.

Frame layout (big-endian)::

    image header : "PACE" | version u8 | width u16 | height u16 | region_count u16
    per region   : kind u8 | category_id u16 | x y w h (4 x u16) | payload_len u32 | payload

On the channel the frame is split into two block groups. The header group
(image header plus every region header, payload-free) is padded to whole
LDPC blocks; the payload group (all payloads concatenated in region
order) is padded once at its end. A region counts as lost when any block
carrying its payload bytes fails to converge; a failed header group loses
the whole frame.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from ..scene import BBox
from . import ldpc, modem

MAGIC = b"PACE"
VERSION = 1
IMAGE_HEADER = struct.Struct(">4sBHHH")
REGION_HEADER = struct.Struct(">BHHHHHI")
IMAGE_HEADER_BYTES = IMAGE_HEADER.size     # 11
REGION_HEADER_BYTES = REGION_HEADER.size   # 15

KIND_BACKGROUND = 0
KIND_OBJECT = 1


class FrameError(ValueError):
    pass


class BudgetError(ValueError):
    pass


@dataclass(frozen=True)
class Region:
    kind: int
    category_id: int
    bbox: BBox
    payload: bytes

    def header_bytes(self) -> bytes:
        b = self.bbox
        return REGION_HEADER.pack(self.kind, self.category_id, b.x, b.y, b.w, b.h,
                                  len(self.payload))


@dataclass(frozen=True)
class Frame:
    width: int
    height: int
    regions: tuple[Region, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "regions", tuple(self.regions))

    def header_section(self) -> bytes:
        head = IMAGE_HEADER.pack(MAGIC, VERSION, self.width, self.height, len(self.regions))
        return head + b"".join(r.header_bytes() for r in self.regions)

    def payload_section(self) -> bytes:
        return b"".join(r.payload for r in self.regions)

    def to_bytes(self) -> bytes:
        head = IMAGE_HEADER.pack(MAGIC, VERSION, self.width, self.height, len(self.regions))
        return head + b"".join(r.header_bytes() + r.payload for r in self.regions)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Frame":
        if len(data) < IMAGE_HEADER_BYTES:
            raise FrameError("truncated image header")
        magic, version, width, height, count = IMAGE_HEADER.unpack_from(data, 0)
        if magic != MAGIC:
            raise FrameError(f"bad magic {magic!r}")
        if version != VERSION:
            raise FrameError(f"unsupported frame version {version}")
        pos, regions = IMAGE_HEADER_BYTES, []
        for i in range(count):
            if pos + REGION_HEADER_BYTES > len(data):
                raise FrameError(f"region {i}: truncated header")
            kind, cat, x, y, w, h, plen = REGION_HEADER.unpack_from(data, pos)
            pos += REGION_HEADER_BYTES
            if pos + plen > len(data):
                raise FrameError(f"region {i}: payload runs past end of frame")
            regions.append(Region(kind, cat, BBox(x, y, w, h), bytes(data[pos:pos + plen])))
            pos += plen
        if pos != len(data):
            raise FrameError(f"{len(data) - pos} trailing bytes after last region")
        return cls(width, height, tuple(regions))

    @classmethod
    def from_sections(cls, header: bytes, payload: bytes) -> "Frame":
        """Rebuild a frame from the header group and the payload stream."""
        magic, version, width, height, count = IMAGE_HEADER.unpack_from(header, 0)
        if magic != MAGIC or version != VERSION:
            raise FrameError("bad image header")
        pos, start, regions = IMAGE_HEADER_BYTES, 0, []
        for i in range(count):
            kind, cat, x, y, w, h, plen = REGION_HEADER.unpack_from(header, pos)
            pos += REGION_HEADER_BYTES
            if start + plen > len(payload):
                raise FrameError(f"region {i}: payload runs past end of stream")
            regions.append(Region(kind, cat, BBox(x, y, w, h), bytes(payload[start:start + plen])))
            start += plen
        return cls(width, height, tuple(regions))


# ---------------------------------------------------------------- cost model

def header_bits(region_count: int) -> int:
    return 8 * (IMAGE_HEADER_BYTES + REGION_HEADER_BYTES * region_count)


def blocks_for(bits: int, k: int = ldpc.K_INFO) -> int:
    return -(-bits // k)


def wire_cost(source_bits_total: int, region_count: int,
              k: int = ldpc.K_INFO, n: int = ldpc.N_CODED) -> int:
    """Wire bytes (coded bits / 8) to carry the payload total plus headers."""
    blocks = blocks_for(header_bits(region_count), k) + blocks_for(source_bits_total, k)
    return blocks * n // 8


def source_pool(wire_budget_bytes: int, region_count: int,
                k: int = ldpc.K_INFO, n: int = ldpc.N_CODED) -> int:
    """Largest payload bit total whose wire cost fits the budget."""
    blocks = (8 * wire_budget_bytes) // n - blocks_for(header_bits(region_count), k)
    if blocks < 1:
        raise BudgetError(
            f"{wire_budget_bytes} wire bytes cannot carry headers for {region_count} "
            f"regions plus one {n // 8}-byte coded block")
    return blocks * k


# ---------------------------------------------------------------- link

@dataclass
class ChannelReport:
    snr_db: float
    frames_sent: int = 0
    blocks: int = 0
    decode_iterations: list = field(default_factory=list)
    block_errors: int = 0
    residual_bit_errors: int = 0
    header_lost: bool = False

    def to_dict(self) -> dict:
        return {"snr_db": self.snr_db, "frames_sent": self.frames_sent,
                "blocks": self.blocks, "decode_iterations": list(self.decode_iterations),
                "block_errors": self.block_errors,
                "residual_bit_errors": self.residual_bit_errors,
                "header_lost": self.header_lost}


@dataclass
class TransmitResult:
    sent: bytes
    received: bytes | None      # serialized received frame; None when the header is lost
    frame: Frame | None
    lost: list                  # per-region loss flags, frame order
    report: ChannelReport


def _to_blocks(data: bytes, k: int) -> np.ndarray:
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8))
    nblocks = max(1, blocks_for(bits.size, k)) if data else 0
    out = np.zeros(nblocks * k, dtype=np.uint8)
    out[:bits.size] = bits
    return out.reshape(nblocks, k)


def _from_blocks(blocks: np.ndarray, nbytes: int) -> bytes:
    return np.packbits(blocks.ravel())[:nbytes].tobytes()


def send_blocks(code: ldpc.LdpcCode, info: np.ndarray, snr_db: float, rng,
                max_iter: int = 50, algorithm: str = "sum-product") -> ldpc.DecodeResult:
    """Encode, map, add noise, demap and decode a batch of info words."""
    if info.shape[0] == 0:
        return ldpc.DecodeResult(np.zeros((0, code.k), np.uint8), np.zeros(0, bool),
                                 np.zeros(0, np.int64))
    coded = ldpc.encode(code, info)
    symbols = modem.qam16_map(coded.ravel())
    received = modem.awgn(symbols, snr_db, rng)
    llrs = modem.qam16_demap(received, modem.noise_variance(snr_db))
    return ldpc.decode(code, llrs.reshape(info.shape[0], code.n),
                       max_iter=max_iter, algorithm=algorithm)


def transmit(frame: Frame, snr_db: float, seed, code: ldpc.LdpcCode | None = None,
             max_iter: int = 50, algorithm: str = "sum-product") -> TransmitResult:
    """Send a frame block by block; the noise stream is fixed by ``seed``."""
    code = code or ldpc.build_code(0)
    rng = np.random.default_rng(seed)
    header, payload = frame.header_section(), frame.payload_section()
    hblocks, pblocks = _to_blocks(header, code.k), _to_blocks(payload, code.k)
    info = np.concatenate([hblocks, pblocks]) if pblocks.size else hblocks
    result = send_blocks(code, info, snr_db, rng, max_iter, algorithm)

    report = ChannelReport(snr_db=snr_db, frames_sent=1, blocks=int(info.shape[0]),
                           decode_iterations=[int(i) for i in result.iterations],
                           block_errors=int((~result.converged).sum()),
                           residual_bit_errors=int((result.info != info).sum()))
    nh = hblocks.shape[0]
    rx_header = _from_blocks(result.info[:nh], len(header))
    rx_payload = _from_blocks(result.info[nh:], len(payload))
    region_count = len(frame.regions)
    if not result.converged[:nh].all():
        report.header_lost = True
        return TransmitResult(frame.to_bytes(), None, None, [True] * region_count, report)
    try:
        rx_frame = Frame.from_sections(rx_header, rx_payload)
    except (FrameError, struct.error):
        report.header_lost = True
        return TransmitResult(frame.to_bytes(), None, None, [True] * region_count, report)

    failed = ~result.converged[nh:]
    bytes_per_block = code.k // 8
    lost, start = [], 0
    for region in rx_frame.regions:
        end = start + len(region.payload)
        if end > start:
            first, last = start // bytes_per_block, (end - 1) // bytes_per_block
            lost.append(bool(failed[first:last + 1].any()))
        else:
            lost.append(False)
        start = end
    return TransmitResult(frame.to_bytes(), rx_frame.to_bytes(), rx_frame, lost, report)


def esn0_db_for(ebn0_db: float, code: ldpc.LdpcCode) -> float:
    return modem.esn0_from_ebn0(ebn0_db, code.rate)

