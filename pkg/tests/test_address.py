import pytest

from estima.address import b58check_decode, bech32_decode, decode_segwit, validate_btc_address

# addresses published for the DeadBolt key-release campaign
KNOWN_GOOD = [
    "bc1qh6pku7gg2d6pw87z3t4f6d4rk6c48ajvsmfjjl",
    "bc1q62rjm9a82s3qmjzffc6uyytw25p3fppftl5zpd",
    "bc1q3guvg2yp5mzmf7hnfr7zlg2unah9t6mjwyky72",
    "1A1zP1eP5QGefi2DMPTfTL5SLmv7DivfNa",  # genesis coinbase
    "3J98t1WpEZ73CNmQviecrnyiWrnqRhWNLy",
    "bc1qar0srrr7xfkvy5l643lydnw9re59gtzzwf5mdq",
    "bc1p0xlxvlhemja6c4dqv22uapctqupfhlxm9h8z3k2e72q4k9hcz7vqzk5jj0",
]


@pytest.mark.parametrize("addr", KNOWN_GOOD)
def test_valid_mainnet_addresses(addr):
    assert validate_btc_address(addr)


@pytest.mark.parametrize(
    "addr",
    [
        "bc1qh6pku7gg2d6pw87z3t4f6d4rk6c48ajvsmfjjm",  # last char flipped
        "1A1zP1eP5QGefi2DMPTfTL5SLmv7DivfNb",
        "S1",
        "",
        "tb1qw508d6qejxtdg4y5r3zarvary0c5xw7kxpjzsx",  # testnet
        "bc1qAR0srrr7xfkvy5l643lydnw9re59gtzzwf5mdq",  # mixed case
        # v1 program with a bech32 (not bech32m) checksum
        "bc1p0xlxvlhemja6c4dqv22uapctqupfhlxm9h8z3k2e72q4k9hcz7vqh2y7hd",
    ],
)
def test_invalid_addresses(addr):
    assert not validate_btc_address(addr)


def test_base58check_payload():
    raw = b58check_decode("1A1zP1eP5QGefi2DMPTfTL5SLmv7DivfNa")
    assert raw[0] == 0 and len(raw) == 21
    assert raw[1:].hex() == "62e907b15cbf27d5425399ebf6f0fb50ebb88f18"


def test_segwit_program():
    version, prog = decode_segwit("bc1qar0srrr7xfkvy5l643lydnw9re59gtzzwf5mdq")
    assert version == 0 and len(prog) == 20
    hrp, _, _ = bech32_decode("bc1qar0srrr7xfkvy5l643lydnw9re59gtzzwf5mdq")
    assert hrp == "bc"
