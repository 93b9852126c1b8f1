"""Coded and uncoded bit error rate of the 16-QAM link over AWGN.

    python3 demos/ber_curve.py [blocks_per_point]

The coded curve uses the rate-1/2 (6144, 3072) code with sum-product
decoding; the uncoded one takes hard decisions at the same Eb/N0.
"""
import sys

import numpy as np

from pragcomm.phy import ldpc, link, modem


def coded_ber(code, ebn0, blocks, rng):
    info = rng.integers(0, 2, (blocks, code.k), dtype=np.uint8)
    res = link.send_blocks(code, info, link.esn0_db_for(ebn0, code), rng)
    return (res.info != info).mean(), (~res.converged).mean()


def uncoded_ber(ebn0, nbits, rng):
    bits = rng.integers(0, 2, nbits, dtype=np.uint8)
    esn0 = modem.esn0_from_ebn0(ebn0)
    y = modem.awgn(modem.qam16_map(bits), esn0, rng)
    return ((modem.qam16_demap(y, modem.noise_variance(esn0)) < 0) != bits).mean()


def main(blocks=40):
    code = ldpc.build_code(0)
    rng = np.random.default_rng(0)
    print(f"{'Eb/N0':>6s} {'uncoded':>9s} {'coded':>9s} {'BLER':>6s}")
    for ebn0 in np.arange(1.0, 6.5, 0.5):
        ub = uncoded_ber(ebn0, blocks * code.k, rng)
        cb, bler = coded_ber(code, ebn0, blocks, rng)
        print(f"{ebn0:6.1f} {ub:9.2e} {cb:9.2e} {bler:6.2f}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 40)
