"""Reference implementations used only as test oracles.

Nothing here imports the package under test. Each oracle is the slowest,
most literal version of its computation: sponge-by-the-book SHA3, affine
double-and-add on secp256k1, and brute force in the toy group.
"""

import struct

# -- SHA3-512 -----------------------------------------------------------

_MASK = (1 << 64) - 1


def _rol(a, n):
    n %= 64
    return ((a << n) | (a >> (64 - n))) & _MASK if n else a


def _keccak_f(lanes):
    r = 1
    for _ in range(24):
        c = [lanes[x][0] ^ lanes[x][1] ^ lanes[x][2] ^ lanes[x][3] ^ lanes[x][4] for x in range(5)]
        d = [c[(x + 4) % 5] ^ _rol(c[(x + 1) % 5], 1) for x in range(5)]
        lanes = [[lanes[x][y] ^ d[x] for y in range(5)] for x in range(5)]
        x, y = 1, 0
        current = lanes[x][y]
        for t in range(24):
            x, y = y, (2 * x + 3 * y) % 5
            current, lanes[x][y] = lanes[x][y], _rol(current, (t + 1) * (t + 2) // 2)
        for y in range(5):
            row = [lanes[x][y] for x in range(5)]
            for x in range(5):
                lanes[x][y] = row[x] ^ ((~row[(x + 1) % 5]) & row[(x + 2) % 5] & _MASK)
        for j in range(7):
            r = ((r << 1) ^ ((r >> 7) * 0x71)) % 256
            if r & 2:
                lanes[0][0] ^= 1 << ((1 << j) - 1)
    return lanes


def _permute(state: bytearray) -> bytearray:
    lanes = [[struct.unpack_from("<Q", state, 8 * (x + 5 * y))[0] for y in range(5)]
             for x in range(5)]
    lanes = _keccak_f(lanes)
    out = bytearray(200)
    for x in range(5):
        for y in range(5):
            struct.pack_into("<Q", out, 8 * (x + 5 * y), lanes[x][y])
    return out


def sha3_512(data: bytes) -> bytes:
    rate, out_len = 72, 64
    padded = bytearray(data) + b"\x06"
    padded += b"\x00" * (-len(padded) % rate)
    padded[-1] |= 0x80
    state = bytearray(200)
    for off in range(0, len(padded), rate):
        for i in range(rate):
            state[i] ^= padded[off + i]
        state = _permute(state)
    return bytes(state[:out_len])


def framed(*parts: bytes) -> bytes:
    return b"".join(len(p).to_bytes(8, "big") + p for p in parts)


# -- secp256k1, affine coordinates ---------------------------------------

P = 2 ** 256 - 2 ** 32 - 977
N = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEBAAEDCE6AF48A03BBFD25E8CD0364141
G = (0x79BE667EF9DCBBAC55A06295CE870B07029BFCDB2DCE28D959F2815B16F81798,
     0x483ADA7726A3C4655DA4FBFC0E1108A8FD17B448A68554199C47D08FFB10D4B8)


def on_curve(pt) -> bool:
    x, y = pt
    return (y * y - x * x * x - 7) % P == 0


def point_add(a, b):
    if a is None:
        return b
    if b is None:
        return a
    (x1, y1), (x2, y2) = a, b
    if x1 == x2 and (y1 + y2) % P == 0:
        return None
    if a == b:
        lam = 3 * x1 * x1 * pow(2 * y1, -1, P) % P
    else:
        lam = (y2 - y1) * pow(x2 - x1, -1, P) % P
    x3 = (lam * lam - x1 - x2) % P
    return x3, (lam * (x1 - x3) - y1) % P


def point_mul(k, pt):
    result = None
    addend = pt
    k %= N
    while k:
        if k & 1:
            result = point_add(result, addend)
        addend = point_add(addend, addend)
        k >>= 1
    return result


def compress(pt) -> bytes:
    x, y = pt
    return bytes([2 + (y & 1)]) + x.to_bytes(32, "big")


def decompress(data: bytes):
    x = int.from_bytes(data[1:], "big")
    y = pow((x ** 3 + 7) % P, (P + 1) // 4, P)
    if y & 1 != data[0] & 1:
        y = P - y
    return x, y


# -- toy group: order-11 subgroup of Z/23, generated by 2 ----------------

TOY_P, TOY_Q, TOY_G = 23, 11, 2
TOY_ELEMENTS = sorted({pow(TOY_G, k, TOY_P) for k in range(1, TOY_Q)})
