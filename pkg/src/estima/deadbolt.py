"""DeadBolt key-release transactions and the coverage techniques built on them.

After a victim pays, the operators post the decryption key from a key
release address K: one input (K) and three outputs, namely the payment
address receiving exactly 5,460 satoshis, K itself as change, and an
OP_RETURN carrying the key. The same few release addresses serve many
victims, so walking their withdrawals reveals payment addresses nobody
observed directly.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date, datetime
from fractions import Fraction
from typing import Iterable, NamedTuple

from .errors import EstimaError
from .estimator import FilterRange, FilterRanges, SeedSet, as_seedset
from .ledger import Ledger, Transaction

RELEASE_VALUE = 5460
OMNI_PREFIX = b"omni"

# ransom of 0.03 BTC, later also 0.05 BTC, with a 0.001 BTC tolerance
DEADBOLT_RANGES = (
    FilterRange(date(2022, 1, 1), date(2023, 4, 12), ((2_900_000, 3_100_000), (4_900_000, 5_100_000))),
)


class KeyReleaseMatch(NamedTuple):
    txid: str
    key_release_address: str
    payment_address: str
    key_payload: bytes
    height: int
    timestamp: datetime
    input_slots: int = 1

    @property
    def multi_slot(self) -> bool:
        return self.input_slots > 1


def match_key_release(
    tx: Transaction, release_value: int = RELEASE_VALUE, omni_filter: bool = True
) -> KeyReleaseMatch | None:
    """Return the match if ``tx`` has the key-release shape, else None.

    One distinct input address K; exactly three outputs which are, in any
    order, an OP_RETURN, a payment of exactly ``release_value`` to an
    address other than K, and change back to K. Payloads starting with
    ``omni`` belong to the Omni layer and are rejected when ``omni_filter``.
    """
    outs = tx.outputs
    if len(outs) != 3 or not tx.inputs:
        return None
    k = tx.inputs[0].address
    for s in tx.inputs:
        if s.address != k:
            return None
    payload = None
    change = payment = None
    for s in outs:
        if s.address is None:
            if payload is not None:
                return None
            payload = s.payload or b""
        elif s.address == k:
            if change is not None:
                return None
            change = s
        else:
            if payment is not None:
                return None
            payment = s
    if payload is None or change is None or payment is None:
        return None
    if payment.value != release_value:
        return None
    if omni_filter and payload[:4] == OMNI_PREFIX:
        return None
    return KeyReleaseMatch(
        tx.txid, k, payment.address, payload, tx.height, tx.timestamp, len(tx.inputs)
    )


@dataclass(frozen=True)
class ScanResult:
    matches: tuple[KeyReleaseMatch, ...]
    release_addresses: tuple[str, ...]

    @property
    def payment_addresses(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(m.payment_address for m in self.matches))


def scan_signature(
    ledger: Ledger,
    from_height: int,
    to_height: int,
    release_value: int = RELEASE_VALUE,
    omni_filter: bool = True,
) -> ScanResult:
    """Sweep every transaction in [from_height, to_height] for the key-release signature."""
    if from_height > to_height:
        raise EstimaError("from_height must not exceed to_height")
    matches = []
    for tx in ledger.transactions(to_height, from_height):
        if len(tx.outputs) != 3:
            continue
        m = match_key_release(tx, release_value, omni_filter)
        if m is not None:
            matches.append(m)
    addrs = sorted({m.key_release_address for m in matches})
    return ScanResult(tuple(matches), tuple(addrs))


@dataclass(frozen=True)
class KeyReleaseExpansion:
    payment_addresses: frozenset[str]
    release_addresses: frozenset[str]
    matches: tuple[KeyReleaseMatch, ...] = ()


def expand_key_release(
    seeds: SeedSet | Iterable[str],
    ledger: Ledger,
    height: int,
    release_value: int = RELEASE_VALUE,
    omni_filter: bool = True,
) -> KeyReleaseExpansion:
    """Backward from seeds to their release addresses, then forward to every released-to address.

    The returned payment set includes the seeds themselves.
    """
    seed_addrs = as_seedset(seeds).addresses if isinstance(seeds, SeedSet) else list(dict.fromkeys(seeds))
    release: set[str] = set()
    for d in ledger.deposits_to(seed_addrs, height):
        if d.value != release_value:
            continue
        m = match_key_release(ledger.tx(d.txid), release_value, omni_filter)
        if m is not None and m.payment_address == d.recipient:
            release.add(m.key_release_address)
    payments = set(seed_addrs)
    found = []
    for tx in ledger.withdrawals_from(release, height):
        m = match_key_release(tx, release_value, omni_filter)
        if m is not None and m.key_release_address in release:
            payments.add(m.payment_address)
            found.append(m)
    return KeyReleaseExpansion(frozenset(payments), frozenset(release), tuple(found))


@dataclass(frozen=True)
class ConversionRateReport:
    total: int
    paid: int
    multi_payment: int

    @property
    def rate(self) -> Fraction:
        return Fraction(self.paid, self.total)


def conversion_rate(
    payment_addresses: Iterable[str],
    ledger: Ledger,
    height: int,
    ranges: FilterRanges = DEADBOLT_RANGES,
) -> ConversionRateReport:
    """How many of the payment addresses received a deposit inside the ransom ranges."""
    addrs = sorted(set(payment_addresses))
    if not addrs:
        raise EstimaError("conversion rate of an empty address set is undefined")
    if not ranges:
        raise EstimaError("conversion rate needs at least one value range")
    in_range: dict[str, int] = {}
    for d in ledger.deposits_to(addrs, height):
        if any(r.contains_day(d.day) and r.contains_value(d.value) for r in ranges):
            in_range[d.recipient] = in_range.get(d.recipient, 0) + 1
    return ConversionRateReport(
        len(addrs), len(in_range), sum(1 for n in in_range.values() if n > 1)
    )
