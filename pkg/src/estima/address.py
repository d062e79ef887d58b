"""Bitcoin address checksum validation (base58check and bech32/bech32m).

Only mainnet forms are accepted: P2PKH/P2SH base58check and ``bc1``
segwit addresses.
"""

from hashlib import sha256

B58_ALPHABET = "123456789ABCDEFGHJKLMNPQRSTUVWXYZabcdefghijkmnopqrstuvwxyz"
_B58_INDEX = {c: i for i, c in enumerate(B58_ALPHABET)}

# version bytes: P2PKH, P2SH
_B58_VERSIONS = (0x00, 0x05)

BECH32_CHARSET = "qpzry9x8gf2tvdw0s3jn54khce6mua7l"
_BECH32_INDEX = {c: i for i, c in enumerate(BECH32_CHARSET)}
_GENERATORS = (0x3B6A57B2, 0x26508E6D, 0x1EA119FA, 0x3D4233DD, 0x2A1462B3)

BECH32_CONST = 1
BECH32M_CONST = 0x2BC830A3


def b58decode(text: str) -> bytes:
    acc = 0
    for ch in text:
        acc = acc * 58 + _B58_INDEX[ch]
    body = acc.to_bytes((acc.bit_length() + 7) // 8, "big") if acc else b""
    pad = len(text) - len(text.lstrip("1"))
    return b"\x00" * pad + body


def b58check_decode(text: str) -> bytes:
    """Decode base58check text and return the payload without checksum.

    Raises ValueError on bad characters or checksum mismatch.
    """
    if not text or any(ch not in _B58_INDEX for ch in text):
        raise ValueError("invalid base58 character")
    raw = b58decode(text)
    if len(raw) < 5:
        raise ValueError("base58check payload too short")
    payload, check = raw[:-4], raw[-4:]
    if sha256(sha256(payload).digest()).digest()[:4] != check:
        raise ValueError("base58check checksum mismatch")
    return payload


def _polymod(values) -> int:
    chk = 1
    for v in values:
        top = chk >> 25
        chk = ((chk & 0x1FFFFFF) << 5) ^ v
        for i in range(5):
            if (top >> i) & 1:
                chk ^= _GENERATORS[i]
    return chk


def _hrp_expand(hrp: str) -> list[int]:
    return [ord(x) >> 5 for x in hrp] + [0] + [ord(x) & 31 for x in hrp]


def bech32_decode(text: str) -> tuple[str, list[int], int]:
    """Split a bech32 string into (hrp, data, checksum constant).

    The returned constant is ``BECH32_CONST`` or ``BECH32M_CONST``; any other
    checksum raises ValueError.
    """
    if any(ord(x) < 33 or ord(x) > 126 for x in text):
        raise ValueError("invalid character range")
    if text.lower() != text and text.upper() != text:
        raise ValueError("mixed case")
    text = text.lower()
    pos = text.rfind("1")
    if pos < 1 or pos + 7 > len(text) or len(text) > 90:
        raise ValueError("invalid separator position or length")
    hrp = text[:pos]
    try:
        data = [_BECH32_INDEX[ch] for ch in text[pos + 1:]]
    except KeyError:
        raise ValueError("invalid bech32 character") from None
    const = _polymod(_hrp_expand(hrp) + data)
    if const not in (BECH32_CONST, BECH32M_CONST):
        raise ValueError("bech32 checksum mismatch")
    return hrp, data[:-6], const


def _convertbits(data, frombits: int, tobits: int) -> list[int]:
    acc = 0
    bits = 0
    out = []
    maxv = (1 << tobits) - 1
    for value in data:
        acc = (acc << frombits) | value
        bits += frombits
        while bits >= tobits:
            bits -= tobits
            out.append((acc >> bits) & maxv)
    if bits >= frombits or ((acc << (tobits - bits)) & maxv):
        raise ValueError("invalid padding")
    return out


def decode_segwit(text: str, hrp: str = "bc") -> tuple[int, bytes]:
    got_hrp, data, const = bech32_decode(text)
    if got_hrp != hrp or not data:
        raise ValueError("wrong human-readable part")
    version = data[0]
    program = bytes(_convertbits(data[1:], 5, 8))
    if version > 16 or not 2 <= len(program) <= 40:
        raise ValueError("invalid witness program")
    if version == 0 and len(program) not in (20, 32):
        raise ValueError("invalid v0 program length")
    # v0 uses bech32, v1+ uses bech32m (BIP350)
    if (version == 0) != (const == BECH32_CONST):
        raise ValueError("wrong checksum variant for witness version")
    return version, program


def validate_btc_address(text: str) -> bool:
    """Return True iff ``text`` is a checksum-valid mainnet Bitcoin address."""
    if not text or not isinstance(text, str):
        return False
    if text[:3].lower() == "bc1":
        try:
            decode_segwit(text)
        except ValueError:
            return False
        return True
    try:
        payload = b58check_decode(text)
    except ValueError:
        return False
    return len(payload) == 21 and payload[0] in _B58_VERSIONS
