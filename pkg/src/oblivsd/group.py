"""Prime-order groups used by the OPRF.

Two implementations share one small interface:

* :data:`SECP256K1` -- the production group, 33-byte SEC1 compressed points,
  hash-to-group via RFC 9380 simplified SWU onto the 3-isogenous curve with
  ``expand_message_xmd`` over SHA3-512.
* :data:`TOY` -- the order-11 subgroup of (Z/23Z)*, generated by 2. Small
  enough to brute-force every exponent in tests.

Group operations are written multiplicatively at the interface
(``exp(element, scalar)``) to line up with the OPRF notation; internally the
curve uses additive Jacobian arithmetic.
"""

import hashlib

from .errors import InvalidElement

try:
    from gmpy2 import invert, mpz
except ImportError:  # pragma: no cover - plain ints are ~3x slower
    mpz = int

    def invert(a, m):
        return pow(a, -1, m)

H1_DST = b"CODSSI-H1-v1"


def expand_message_xmd(msg: bytes, dst: bytes, length: int, hash=hashlib.sha3_512) -> bytes:
    """RFC 9380 section 5.3.1. Defaults to SHA3-512 (64-byte output, 72-byte rate)."""
    b_len, rate = hash().digest_size, hash().block_size
    ell = -(-length // b_len)
    if ell > 255 or length > 0xFFFF or len(dst) > 255:
        raise ValueError("expand_message_xmd parameters out of range")
    dst_prime = dst + bytes([len(dst)])
    msg_prime = bytes(rate) + msg + length.to_bytes(2, "big") + b"\x00" + dst_prime
    b0 = hash(msg_prime).digest()
    blocks = [hash(b0 + b"\x01" + dst_prime).digest()]
    for i in range(2, ell + 1):
        mixed = bytes(a ^ b for a, b in zip(b0, blocks[-1]))
        blocks.append(hash(mixed + bytes([i]) + dst_prime).digest())
    return b"".join(blocks)[:length]


class Secp256k1Group:
    name = "secp256k1"
    p = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEFFFFFC2F
    order = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEBAAEDCE6AF48A03BBFD25E8CD0364141
    b = 7
    gx = 0x79BE667EF9DCBBAC55A06295CE870B07029BFCDB2DCE28D959F2815B16F81798
    gy = 0x483ADA7726A3C4655DA4FBFC0E1108A8FD17B448A68554199C47D08FFB10D4B8
    element_size = 33
    _pm = mpz(p)

    # isogenous curve E': y^2 = x^3 + A'x + B', Z = -11 (RFC 9380 section 8.7)
    _iso_a = 0x3F8731ABDD661ADCA08A5558F0F5D272E953D363CB6F0E5D405447C01A444533
    _iso_b = 1771
    _z = p - 11
    # 3-isogeny E' -> E, coefficients in ascending degree (RFC 9380 appendix E.1)
    _x_num = (
        0x8E38E38E38E38E38E38E38E38E38E38E38E38E38E38E38E38E38E38DAAAAA8C7,
        0x07D3D4C80BC321D5B9F315CEA7FD44C5D595D2FC0BF63B92DFFF1044F17C6581,
        0x534C328D23F234E6E2A413DECA25CAECE4506144037C40314ECBD0B53D9DD262,
        0x8E38E38E38E38E38E38E38E38E38E38E38E38E38E38E38E38E38E38DAAAAA88C,
    )
    _x_den = (
        0xD35771193D94918A9CA34CCBB7B640DD86CD409542F8487D9FE6B745781EB49B,
        0xEDADC6F64383DC1DF7C4B2D51B54225406D36B641F5E41BBC52A56612A8C6D14,
        1,
    )
    _y_num = (
        0x4BDA12F684BDA12F684BDA12F684BDA12F684BDA12F684BDA12F684B8E38E23C,
        0xC75E0C32D5CB7C0FA9D0A54B12A0A6D5647AB046D686DA6FDFFC90FC201D71A3,
        0x29A6194691F91A73715209EF6512E576722830A201BE2018A765E85A9ECEE931,
        0x2F684BDA12F684BDA12F684BDA12F684BDA12F684BDA12F684BDA12F38E38D84,
    )
    _y_den = (
        0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEFFFFF93B,
        0x7A06534BB8BDB49FD5E9E6632722C2989467C1BFC8E8D978DFB425D2685C2573,
        0x6484AA716545CA2CF3A70C3FA8FE337E0A3D21162F0D6299A7BF8192BFD2A76F,
        1,
    )

    identity = None

    @property
    def generator(self):
        return (self.gx, self.gy)

    # -- encoding ---------------------------------------------------------

    def is_identity(self, element) -> bool:
        return element is None

    def encode(self, element) -> bytes:
        if element is None:
            raise InvalidElement()
        x, y = element
        return bytes([2 | (y & 1)]) + x.to_bytes(32, "big")

    def decode(self, data: bytes):
        """Parse a compressed point. Identity and off-curve encodings raise
        :class:`InvalidElement`; the curve has cofactor 1 so every on-curve
        point is in the prime-order group."""
        p = self.p
        if len(data) != 33 or data[0] not in (2, 3):
            raise InvalidElement()
        x = int.from_bytes(data[1:], "big")
        if x >= p:
            raise InvalidElement()
        rhs = (pow(x, 3, p) + self.b) % p
        y = int(pow(mpz(rhs), (p + 1) // 4, self._pm))
        if y * y % p != rhs:
            raise InvalidElement()
        if (y & 1) != (data[0] & 1):
            y = p - y
        return (x, y)

    def is_valid(self, element) -> bool:
        if element is None:
            return False
        x, y = element
        p = self.p
        return 0 <= x < p and 0 <= y < p and (y * y - x * x * x - self.b) % p == 0

    # -- arithmetic -------------------------------------------------------

    def _double(self, P):
        X, Y, Z = P
        if Y == 0:
            return (1, 1, 0)
        p = self._pm
        YY = Y * Y % p
        S = 4 * X * YY % p
        M = 3 * X * X % p
        X3 = (M * M - 2 * S) % p
        Y3 = (M * (S - X3) - 8 * YY * YY) % p
        Z3 = 2 * Y * Z % p
        return (X3, Y3, Z3)

    def _add(self, P, Q):
        X1, Y1, Z1 = P
        X2, Y2, Z2 = Q
        if Z1 == 0:
            return Q
        if Z2 == 0:
            return P
        p = self._pm
        Z1Z1 = Z1 * Z1 % p
        Z2Z2 = Z2 * Z2 % p
        U1 = X1 * Z2Z2 % p
        U2 = X2 * Z1Z1 % p
        S1 = Y1 * Z2 * Z2Z2 % p
        S2 = Y2 * Z1 * Z1Z1 % p
        if U1 == U2:
            if S1 == S2:
                return self._double(P)
            return (1, 1, 0)
        H = U2 - U1
        R = S2 - S1
        HH = H * H % p
        HHH = H * HH % p
        V = U1 * HH % p
        X3 = (R * R - HHH - 2 * V) % p
        Y3 = (R * (V - X3) - S1 * HHH) % p
        Z3 = H * Z1 * Z2 % p
        return (X3, Y3, Z3)

    def _add_affine(self, P, x2, y2):
        # mixed addition, Q = (x2, y2, 1)
        X1, Y1, Z1 = P
        if Z1 == 0:
            return (x2, y2, 1)
        p = self._pm
        Z1Z1 = Z1 * Z1 % p
        U2 = x2 * Z1Z1 % p
        S2 = y2 * Z1 * Z1Z1 % p
        if X1 == U2:
            if Y1 == S2:
                return self._double(P)
            return (1, 1, 0)
        H = U2 - X1
        R = S2 - Y1
        HH = H * H % p
        HHH = H * HH % p
        V = X1 * HH % p
        X3 = (R * R - HHH - 2 * V) % p
        Y3 = (R * (V - X3) - Y1 * HHH) % p
        Z3 = H * Z1 % p
        return (X3, Y3, Z3)

    def _to_affine(self, P):
        X, Y, Z = P
        if Z == 0:
            return None
        p = self._pm
        zinv = invert(Z, p)
        zinv2 = zinv * zinv % p
        return (int(X * zinv2 % p), int(Y * zinv2 * zinv % p))

    @staticmethod
    def _wnaf(k: int, w: int = 5):
        digits = []
        half, full = 1 << (w - 1), 1 << w
        while k:
            if k & 1:
                d = k & (full - 1)
                if d >= half:
                    d -= full
                k -= d
            else:
                d = 0
            digits.append(d)
            k >>= 1
        return digits

    def exp(self, element, scalar: int):
        """``element`` raised to ``scalar`` (i.e. scalar multiplication)."""
        if element is None:
            return None
        k = scalar % self.order
        if k == 0:
            return None
        p = self._pm
        x, y = mpz(element[0]), mpz(element[1])
        base = (x, y, mpz(1))
        twice = self._double(base)
        table = [base]
        for _ in range(7):
            table.append(self._add(table[-1], twice))
        affine = [self._to_affine(t) for t in table]
        acc = (1, 1, 0)
        for d in reversed(self._wnaf(k)):
            acc = self._double(acc)
            if d > 0:
                tx, ty = affine[d >> 1]
                acc = self._add_affine(acc, tx, ty)
            elif d < 0:
                tx, ty = affine[(-d) >> 1]
                acc = self._add_affine(acc, tx, p - ty)
        return self._to_affine(acc)

    def mul(self, a, b):
        """Group operation (point addition)."""
        if a is None:
            return b
        if b is None:
            return a
        one = mpz(1)
        return self._to_affine(self._add((mpz(a[0]), mpz(a[1]), one),
                                         (mpz(b[0]), mpz(b[1]), one)))

    # -- hashing ----------------------------------------------------------

    def _sswu(self, u: int):
        p, A, B, Z = self._pm, self._iso_a, self._iso_b, self._z
        u = mpz(u)
        u2 = u * u % p
        tv = (Z * Z * u2 * u2 + Z * u2) % p
        if tv == 0:
            x1 = B * invert(Z * A, p) % p
        else:
            x1 = (-B) * invert(A, p) * (1 + invert(tv, p)) % p
        gx1 = (pow(x1, 3, p) + A * x1 + B) % p
        y1 = pow(gx1, (p + 1) // 4, p)
        if y1 * y1 % p == gx1:
            x, y = x1, y1
        else:
            x = Z * u2 * x1 % p
            gx2 = (pow(x, 3, p) + A * x + B) % p
            y = pow(gx2, (p + 1) // 4, p)
        if (u & 1) != (y & 1):
            y = p - y
        return x, y

    def _iso_map(self, x: int, y: int):
        p = self._pm

        def poly(coeffs):
            acc = 0
            for c in reversed(coeffs):
                acc = (acc * x + c) % p
            return acc

        x_out = poly(self._x_num) * invert(poly(self._x_den), p) % p
        y_out = y * poly(self._y_num) * invert(poly(self._y_den), p) % p
        return (int(x_out), int(y_out))

    def map_to_curve(self, u: int):
        return self._iso_map(*self._sswu(u % self.p))

    def hash_to_field(self, msg: bytes, count: int, dst: bytes, hash=hashlib.sha3_512):
        span = 48  # ceil((256 + 128) / 8)
        uniform = expand_message_xmd(msg, dst, count * span, hash)
        return [int.from_bytes(uniform[i * span:(i + 1) * span], "big") % self.p
                for i in range(count)]

    def hash_to_group(self, msg: bytes, dst: bytes = H1_DST, hash=hashlib.sha3_512):
        """RFC 9380 ``hash_to_curve`` (random-oracle variant, two field
        elements summed). The result is the identity only with negligible
        probability; that case is treated as an invalid element."""
        u0, u1 = self.hash_to_field(msg, 2, dst, hash)
        point = self.mul(self.map_to_curve(u0), self.map_to_curve(u1))
        if point is None:
            raise InvalidElement()
        return point

    def __repr__(self):
        return "Secp256k1Group()"


class ToyGroup:
    """Order-11 subgroup of the integers mod 23, generator 2.

    Elements are plain ints; the identity is 1. ``hash_to_group`` lands on a
    non-identity element by construction (exponent drawn from 1..10).
    """

    name = "toy23"
    p = 23
    order = 11
    generator = 2
    element_size = 1
    identity = 1

    def is_identity(self, element) -> bool:
        return element == 1

    def is_valid(self, element) -> bool:
        return (isinstance(element, int) and 1 < element < self.p
                and pow(element, self.order, self.p) == 1)

    def encode(self, element) -> bytes:
        if not self.is_valid(element):
            raise InvalidElement()
        return bytes([element])

    def decode(self, data: bytes):
        if len(data) != 1 or not self.is_valid(data[0]):
            raise InvalidElement()
        return data[0]

    def exp(self, element, scalar: int):
        return pow(element, scalar % self.order, self.p)

    def mul(self, a, b):
        return a * b % self.p

    def elements(self):
        """All non-identity subgroup elements."""
        return [pow(self.generator, e, self.p) for e in range(1, self.order)]

    def hash_to_group(self, msg: bytes, dst: bytes = H1_DST):
        h = int.from_bytes(hashlib.sha3_512(dst + msg).digest(), "big")
        return pow(self.generator, 1 + h % (self.order - 1), self.p)

    def __repr__(self):
        return "ToyGroup()"


SECP256K1 = Secp256k1Group()
TOY = ToyGroup()
