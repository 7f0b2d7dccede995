"""1-out-of-2 oblivious transfer for evaluator input labels.

``DhOt`` is the two-message exponential OT (sender publishes A = g^a;
for choice bit c the receiver returns B = g^b * A^c; the two pad keys
are hashes of B^a and (B/A)^a, of which the receiver can compute exactly
one as A^b).  It runs over the 2048-bit MODP group of RFC 3526 with
generator 2 and 256-bit exponents, and is the default provider.  Secure
against semi-honest parties only, like the rest of the protocol.

``InsecureStubOt`` ships the choice bits in the clear and returns the
chosen labels directly.  It exists so loopback tests and benchmarks can
skip the public-key math.  Never use it across a trust boundary.

Both providers batch all transfers of a session into single frames, so
the round pattern (one receiver->sender message wrapped in sender->
receiver traffic) is independent of how many labels move.
"""

from __future__ import annotations

import hashlib
import secrets

from obnn.transport import MSG_OT, ProtocolError

# RFC 3526, 2048-bit MODP group (id 14): p = 2^2048 - 2^1984 - 1 + 2^64 *
# (floor(2^1918 pi) + 124476), generator 2.
MODP_2048_HEX = (
    "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD129024E088A67CC74"
    "020BBEA63B139B22514A08798E3404DDEF9519B3CD3A431B302B0A6DF25F1437"
    "4FE1356D6D51C245E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED"
    "EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3DC2007CB8A163BF05"
    "98DA48361C55D39A69163FA8FD24CF5F83655D23DCA3AD961C62F356208552BB"
    "9ED529077096966D670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B"
    "E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9DE2BCBF695581718"
    "3995497CEA956AE515D2261898FA051015728E5A8AACAA68FFFFFFFFFFFFFFFF"
)
P = int(MODP_2048_HEX, 16)
G = 2
ELEMENT_BYTES = 256
EXPONENT_BITS = 256
KEY_BYTES = 16


def _derive_key(transcript: bytes, index: int, element: int) -> bytes:
    data = (
        b"obnn-ot-v1"
        + transcript
        + index.to_bytes(4, "little")
        + element.to_bytes(ELEMENT_BYTES, "little")
    )
    return hashlib.sha256(data).digest()[:KEY_BYTES]


def _xor16(a: bytes, b: bytes) -> bytes:
    return (int.from_bytes(a, "little") ^ int.from_bytes(b, "little")).to_bytes(
        KEY_BYTES, "little"
    )


def _rand_exponent() -> int:
    return secrets.randbits(EXPONENT_BITS) | 1


class DhOt:
    """Exponential OT over the RFC 3526 2048-bit group."""

    name = "dh"

    def send(self, transport, pairs):
        """Transfer one of each (msg0, msg1) pair of 16-byte strings."""
        a = _rand_exponent()
        big_a = pow(G, a, P)
        a_bytes = big_a.to_bytes(ELEMENT_BYTES, "little")
        transport.send_frame(MSG_OT, a_bytes)

        _, payload = transport.recv_frame(expect=MSG_OT)
        if len(payload) != ELEMENT_BYTES * len(pairs):
            raise ProtocolError("truncated OT response")
        inv_a_to_a = pow(big_a, -a, P)
        out = bytearray()
        for i, (m0, m1) in enumerate(pairs):
            b_elem = int.from_bytes(
                payload[i * ELEMENT_BYTES : (i + 1) * ELEMENT_BYTES], "little"
            )
            if not 1 < b_elem < P:
                raise ProtocolError("OT response element out of range")
            b_to_a = pow(b_elem, a, P)
            key0 = _derive_key(a_bytes, i, b_to_a)
            key1 = _derive_key(a_bytes, i, b_to_a * inv_a_to_a % P)
            out += _xor16(m0, key0)
            out += _xor16(m1, key1)
        transport.send_frame(MSG_OT, bytes(out))

    def receive(self, transport, bits):
        """Fetch the messages selected by ``bits``; the sender learns nothing."""
        _, a_bytes = transport.recv_frame(expect=MSG_OT)
        if len(a_bytes) != ELEMENT_BYTES:
            raise ProtocolError("truncated OT offer")
        big_a = int.from_bytes(a_bytes, "little")
        if not 1 < big_a < P:
            raise ProtocolError("OT offer element out of range")

        exps = [_rand_exponent() for _ in bits]
        payload = bytearray()
        for c, b in zip(bits, exps):
            elem = pow(G, b, P)
            if c & 1:
                elem = elem * big_a % P
            payload += elem.to_bytes(ELEMENT_BYTES, "little")
        transport.send_frame(MSG_OT, bytes(payload))

        _, cts = transport.recv_frame(expect=MSG_OT)
        if len(cts) != 2 * KEY_BYTES * len(bits):
            raise ProtocolError("truncated OT ciphertexts")
        out = []
        for i, (c, b) in enumerate(zip(bits, exps)):
            key = _derive_key(a_bytes, i, pow(big_a, b, P))
            off = (2 * i + (c & 1)) * KEY_BYTES
            out.append(_xor16(cts[off : off + KEY_BYTES], key))
        return out


class InsecureStubOt:
    """Choice bits in the clear; loopback testing only."""

    name = "stub"

    def send(self, transport, pairs):
        _, payload = transport.recv_frame(expect=MSG_OT)
        if len(payload) != len(pairs):
            raise ProtocolError("stub OT bit count mismatch")
        out = bytearray()
        for (m0, m1), bit in zip(pairs, payload):
            out += m1 if bit & 1 else m0
        transport.send_frame(MSG_OT, bytes(out))

    def receive(self, transport, bits):
        transport.send_frame(MSG_OT, bytes(bytearray(b & 1 for b in bits)))
        _, payload = transport.recv_frame(expect=MSG_OT)
        if len(payload) != KEY_BYTES * len(bits):
            raise ProtocolError("truncated stub OT reply")
        return [
            payload[i * KEY_BYTES : (i + 1) * KEY_BYTES] for i in range(len(bits))
        ]


OT_PROVIDERS = {"dh": DhOt, "stub": InsecureStubOt}


def make_ot(name):
    if isinstance(name, str):
        try:
            return OT_PROVIDERS[name]()
        except KeyError:
            raise ValueError(f"unknown OT provider {name!r}") from None
    return name
