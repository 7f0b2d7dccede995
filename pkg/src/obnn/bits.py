"""Bit packing shared by the wire formats (LSB-first within each byte)."""


def pack_bits(bits) -> bytes:
    out = bytearray((len(bits) + 7) // 8)
    for i, bit in enumerate(bits):
        if bit & 1:
            out[i >> 3] |= 1 << (i & 7)
    return bytes(out)


def unpack_bits(data: bytes, count: int) -> list:
    if len(data) < (count + 7) // 8:
        raise ValueError(f"need {(count + 7) // 8} bytes for {count} bits, have {len(data)}")
    return [(data[i >> 3] >> (i & 7)) & 1 for i in range(count)]
