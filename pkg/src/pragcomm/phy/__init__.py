"""Physical layer: LDPC(6144, 3072), Gray 16-QAM, AWGN and framing."""
from .ldpc import LdpcCode, build_code, decode, encode
from .link import (ChannelReport, Frame, Region, TransmitResult, source_pool,
                   transmit, wire_cost)
from .modem import awgn, qam16_demap, qam16_map

__all__ = ["LdpcCode", "build_code", "decode", "encode", "ChannelReport", "Frame",
           "Region", "TransmitResult", "source_pool", "transmit", "wire_cost",
           "awgn", "qam16_demap", "qam16_map"]
