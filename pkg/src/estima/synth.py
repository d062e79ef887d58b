"""Synthetic ledgers with known ground truth, and brute-force oracles.

Randomness comes from :class:`XorShift64Star`, a fully specified generator
(xorshift64* with splitmix64 seeding), so a fixture is reproducible from
its seed in any language:

    splitmix64(x):  x += 0x9E3779B97F4A7C15
                    z = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9
                    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
                    return z ^ (z >> 31)
    next():         x ^= x >> 12; x ^= x << 25; x ^= x >> 27
                    return x * 0x2545F4914F6CDD1D
    randbelow(n):   draw r until r < 2**64 - (2**64 mod n); return r mod n

all arithmetic modulo 2**64.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from datetime import date, datetime, timedelta, timezone
from hashlib import sha256
from itertools import permutations
from typing import Iterable, Sequence

from .clustering import detect_coinjoin
from .deadbolt import OMNI_PREFIX, RELEASE_VALUE, KeyReleaseMatch
from .errors import EstimaError
from .estimator import SeedEntry, SeedSet
from .ledger import Ledger, Transaction, TxSlot
from .rates import RateTable
from .tags import TagRecord

MASK64 = (1 << 64) - 1
UTC = timezone.utc


def splitmix64(x: int) -> tuple[int, int]:
    """One splitmix64 step: returns (new state, output)."""
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return x, z ^ (z >> 31)


class XorShift64Star:
    def __init__(self, seed: int):
        _, state = splitmix64(seed & MASK64)
        self.state = state or 0x9E3779B97F4A7C15

    def next_u64(self) -> int:
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & MASK64
        x ^= x >> 27
        self.state = x
        return (x * 0x2545F4914F6CDD1D) & MASK64

    def randbelow(self, n: int) -> int:
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            r = self.next_u64()
            if r < limit:
                return r % n

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi]."""
        return lo + self.randbelow(hi - lo + 1)

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def choice(self, seq: Sequence):
        return seq[self.randbelow(len(seq))]

    def shuffle(self, items: list) -> None:
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]

    def sample(self, seq: Sequence, k: int) -> list:
        pool = list(seq)
        if k > len(pool):
            raise ValueError("sample larger than population")
        for i in range(k):
            j = i + self.randbelow(len(pool) - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]

    def token(self, nbytes: int) -> bytes:
        out = bytearray()
        while len(out) < nbytes:
            out += self.next_u64().to_bytes(8, "little")
        return bytes(out[:nbytes])


# --- ledger construction --------------------------------------------------


def op_return(payload: bytes, value: int = 0) -> TxSlot:
    return TxSlot(None, value, payload)


class LedgerBuilder:
    """Collects transactions with explicit times and turns them into a Ledger.

    Times are seconds after ``start``; block height is ``start_height`` plus
    elapsed ten-minute intervals. Transactions are ordered by time, ties by
    creation order; without an explicit time each one lands ``step``
    seconds after the latest so far.
    """

    def __init__(
        self,
        tag: str = "fixture",
        start: datetime = datetime(2022, 1, 25, tzinfo=UTC),
        start_height: int = 720_000,
        step: int = 600,
    ):
        self.tag = tag
        self.step = step
        self.start = start
        self.start_height = start_height
        self._rows: list[tuple[int, int, str, tuple, tuple]] = []
        self._clock = 0

    def add(self, inputs: Iterable, outputs: Iterable, at: int | None = None) -> str:
        if at is None:
            at = self._clock + self.step
        self._clock = max(self._clock, at)
        seq = len(self._rows)
        txid = sha256(f"{self.tag}:{seq}".encode()).hexdigest()
        ins = tuple(s if isinstance(s, TxSlot) else TxSlot(s[0], s[1]) for s in inputs)
        outs = tuple(s if isinstance(s, TxSlot) else TxSlot(s[0], s[1]) for s in outputs)
        self._rows.append((at, seq, txid, ins, outs))
        return txid

    def __len__(self) -> int:
        return len(self._rows)

    def transactions(self) -> list[Transaction]:
        out = []
        for at, _, txid, ins, outs in sorted(self._rows, key=lambda r: (r[0], r[1])):
            ts = self.start + timedelta(seconds=at)
            out.append(Transaction(txid, self.start_height + at // 600, ts, ins, outs))
        return out

    def build(self, strict: bool = False) -> Ledger:
        return Ledger(self.transactions(), strict=strict)


@dataclass(frozen=True)
class GroundTruth:
    payment_addresses: tuple[str, ...]
    payments: tuple[tuple[str, str, int], ...]  # (txid, address, satoshis) per victim payment
    seeds: tuple[str, ...]
    release_addresses: tuple[str, ...] = ()
    owner_addresses: tuple[str, ...] = ()
    tags: tuple[TagRecord, ...] = ()
    extra: dict = field(default_factory=dict)

    @property
    def revenue(self) -> int:
        return sum(v for _, _, v in self.payments)

    def revenue_of(self, addresses: Iterable[str]) -> int:
        wanted = set(addresses)
        return sum(v for _, a, v in self.payments if a in wanted)

    def seedset(self) -> SeedSet:
        return SeedSet(self.seeds)

    def to_json(self) -> dict:
        d = asdict(self)
        d["revenue"] = self.revenue
        d["tags"] = [list(t) for t in self.tags]
        return d

    @classmethod
    def from_json(cls, obj: dict) -> "GroundTruth":
        return cls(
            payment_addresses=tuple(obj["payment_addresses"]),
            payments=tuple(tuple(p) for p in obj["payments"]),
            seeds=tuple(obj["seeds"]),
            release_addresses=tuple(obj.get("release_addresses", ())),
            owner_addresses=tuple(obj.get("owner_addresses", ())),
            tags=tuple(TagRecord(*t) for t in obj.get("tags", ())),
            extra=obj.get("extra", {}),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"


# --- the two collection patterns -----------------------------------------

RANSOM = 3_000_000  # 0.03 BTC
VICTIM_FEE = 2_000


def gen_fig1a() -> tuple[Ledger, GroundTruth]:
    """Four payment addresses swept together by one 4-input withdrawal into C."""
    b = LedgerBuilder("fig1a")
    pays = ["S1", "S2", "P1", "P2"]
    payments = []
    for i, p in enumerate(pays, 1):
        txid = b.add([(f"V{i}", RANSOM + VICTIM_FEE)], [(p, RANSOM)])
        payments.append((txid, p, RANSOM))
    b.add([(p, RANSOM) for p in pays], [("C", 4 * RANSOM - 10_000)], at=86_400)
    truth = GroundTruth(
        payment_addresses=tuple(pays),
        payments=tuple(payments),
        seeds=("S1", "S2"),
        owner_addresses=tuple(pays) + ("C",),
    )
    return b.build(), truth


def gen_fig1b() -> tuple[Ledger, GroundTruth]:
    """Each payment address moves 1-to-1 to an aggregator; aggregators are swept into C."""
    b = LedgerBuilder("fig1b")
    pays = ["S1", "S2", "P1", "P2"]
    aggs = ["A1", "A2", "A3", "A4"]
    payments = []
    for i, p in enumerate(pays, 1):
        txid = b.add([(f"V{i}", RANSOM + VICTIM_FEE)], [(p, RANSOM)])
        payments.append((txid, p, RANSOM))
    moved = RANSOM - 5_000
    for p, a in zip(pays, aggs):
        b.add([(p, RANSOM)], [(a, moved)], at=b._clock + 3600)
    b.add([(a, moved) for a in aggs], [("C", 4 * moved - 10_000)], at=b._clock + 86_400)
    truth = GroundTruth(
        payment_addresses=tuple(pays),
        payments=tuple(payments),
        seeds=("S1", "S2"),
        owner_addresses=tuple(pays + aggs) + ("C",),
        extra={"aggregators": aggs},
    )
    return b.build(), truth


# --- parameterised campaigns ----------------------------------------------

DIRECT_MULTI_INPUT = "direct_multi_input"
AGGREGATED_ONE_TO_N = "aggregated_one_to_n"
HOLD = "hold"
TOPOLOGIES = (DIRECT_MULTI_INPUT, AGGREGATED_ONE_TO_N, HOLD)


@dataclass(frozen=True)
class CampaignSpec:
    """Parameters of a synthetic ransomware campaign.

    ``topology`` selects how payment addresses are withdrawn: swept by
    multi-input transactions, moved 1-to-1 to aggregators first, or never
    moved (``hold``). ``seed_sample_size`` None means every payment address
    is a seed.
    """

    victims: int
    reuse_probability: float = 0.0
    ransom_values: tuple[int, ...] = (RANSOM,)
    topology: str = AGGREGATED_ONE_TO_N
    service_cluster_size: int = 0
    service_deposits: int = 0
    service_tagged: bool = True
    key_release: bool = False
    release_address_count: int = 2
    seed_sample_size: int | None = None
    rng_seed: int = 0
    start: str = "2022-01-25"
    window_days: int = 180
    start_height: int = 720_000
    batch_size: int = 4
    internal_shuffles: int = 0
    omni_decoys: int = 0
    near_misses: int = 0
    noise_txs: int = 0

    def __post_init__(self):
        if self.victims < 1:
            raise EstimaError("victims must be >= 1")
        if not 0.0 <= self.reuse_probability <= 1.0:
            raise EstimaError("reuse_probability must be in [0, 1]")
        if not self.ransom_values or any(v <= 0 for v in self.ransom_values):
            raise EstimaError("ransom_values must be positive satoshi amounts")
        if self.topology not in TOPOLOGIES:
            raise EstimaError(f"unknown topology {self.topology!r}")
        if self.key_release and self.release_address_count < 1:
            raise EstimaError("key release simulation needs at least one release address")
        if self.service_cluster_size == 1:
            raise EstimaError("a service cluster needs at least 2 addresses")
        if self.seed_sample_size is not None and self.seed_sample_size < 0:
            raise EstimaError("seed_sample_size must be >= 0")
        if self.batch_size < 1 or self.window_days < 1:
            raise EstimaError("batch_size and window_days must be >= 1")

    @classmethod
    def from_json(cls, obj: dict) -> "CampaignSpec":
        obj = dict(obj)
        if "ransom_values" in obj:
            obj["ransom_values"] = tuple(obj["ransom_values"])
        try:
            return cls(**obj)
        except TypeError as exc:
            raise EstimaError(f"bad campaign spec: {exc}") from None


def _key(rng: XorShift64Star) -> bytes:
    while True:
        k = rng.token(16)
        if k[:4] != OMNI_PREFIX:
            return k


def gen_campaign(spec: CampaignSpec) -> tuple[Ledger, GroundTruth]:
    """Generate a campaign ledger; deterministic in ``spec`` (including ``rng_seed``)."""
    txs, truth = campaign_transactions(spec)
    return Ledger(txs), truth


def campaign_transactions(spec: CampaignSpec) -> tuple[list[Transaction], GroundTruth]:
    rng = XorShift64Star(spec.rng_seed)
    start = datetime.combine(date.fromisoformat(spec.start), datetime.min.time(), UTC)
    b = LedgerBuilder(f"campaign:{spec.rng_seed}", start, spec.start_height)
    window = spec.window_days * 86_400
    utxos: dict[str, list[int]] = {}

    def credit(addr: str, value: int) -> None:
        utxos.setdefault(addr, []).append(value)

    def spend_all(addr: str) -> list[tuple[str, int]]:
        return [(addr, v) for v in utxos.pop(addr, [])]

    # service cluster: an exchange whose deposit addresses get swept into a hot wallet
    service = [f"E{i:06d}" for i in range(spec.service_cluster_size)]
    wallet_at_service = service[1 + rng.randbelow(len(service) - 1)] if service else None

    # victim payments
    times = sorted(rng.randbelow(window) for _ in range(spec.victims))
    payment_addrs: list[str] = []
    payments = []
    first_paid: dict[str, int] = {}
    for i, t in enumerate(times):
        if payment_addrs and spec.reuse_probability > 0 and rng.random() < spec.reuse_probability:
            p = rng.choice(payment_addrs)
        elif wallet_at_service and not payment_addrs:
            p = wallet_at_service
            payment_addrs.append(p)
        else:
            p = f"P{len(payment_addrs):07d}"
            payment_addrs.append(p)
        value = rng.choice(spec.ransom_values)
        fee = 1_000 + rng.randbelow(4_000)
        txid = b.add([(f"V{i:07d}", value + fee)], [(p, value)], at=t)
        payments.append((txid, p, value))
        first_paid.setdefault(p, t)
        credit(p, value)

    # unrelated customer deposits into the service
    if service:
        targets = [e for e in service if e != wallet_at_service]
        for j in range(spec.service_deposits):
            e = targets[j] if j < len(targets) else rng.choice(targets)
            value = 10_000 + rng.randbelow(20_000_000)
            b.add([(f"U{j:07d}", value + 1_500)], [(e, value)], at=rng.randbelow(window))
            credit(e, value)

    # key release transactions, one per paid address, processed in time order
    release_addrs = [f"K{i:02d}" for i in range(spec.release_address_count)] if spec.key_release else []
    release_txids = []
    if release_addrs:
        balance = {}
        for k in release_addrs:
            balance[k] = 10 * 100_000_000
            b.add([], [(k, balance[k])], at=0)
        plan = sorted(
            (first_paid[p] + 600 + rng.randbelow(3 * 86_400), n, p, rng.choice(release_addrs))
            for n, p in enumerate(payment_addrs)
        )
        for at, _, p, k in plan:
            fee = 1_000 + rng.randbelow(2_000)
            change = balance[k] - RELEASE_VALUE - fee
            outs = [TxSlot(p, RELEASE_VALUE), TxSlot(k, change), op_return(_key(rng))]
            rng.shuffle(outs)
            release_txids.append(b.add([(k, balance[k])], outs, at=at))
            balance[k] = change
            credit(p, RELEASE_VALUE)

    # signature decoys: Omni payloads with the right shape, and shapes that almost match
    for j in range(spec.omni_decoys):
        src, dst = f"O{j:06d}", f"R{j:06d}"
        outs = [TxSlot(dst, RELEASE_VALUE), TxSlot(src, 50_000), op_return(OMNI_PREFIX + rng.token(16))]
        rng.shuffle(outs)
        b.add([(src, 60_000)], outs, at=rng.randbelow(window))
    for j in range(spec.near_misses):
        b.add(*_near_miss(j, rng), at=rng.randbelow(window))

    # background traffic between unrelated addresses
    pool = max(8, spec.noise_txs // 2)
    for j in range(spec.noise_txs):
        nin = 1 + rng.randbelow(3)
        ins = [(f"N{rng.randbelow(pool):07d}", 1_000 + rng.randbelow(10**9)) for _ in range(nin)]
        avail = sum(v for _, v in ins) - 500
        nout = 1 + rng.randbelow(2)
        if nout == 1:
            outs = [(f"N{rng.randbelow(pool):07d}", avail)]
        else:
            part = 1 + rng.randbelow(avail - 1)
            outs = [(f"N{rng.randbelow(pool):07d}", part), (f"F{j:07d}", avail - part)]
        b.add(ins, outs, at=rng.randbelow(window))

    clock = window + 4 * 86_400
    own = [p for p in payment_addrs if p != wallet_at_service]

    # owner moves funds among its own payment addresses
    for _ in range(spec.internal_shuffles):
        funded = [p for p in own if p in utxos]
        if len(own) < 2 or not funded:
            break
        clock += 600
        src = rng.choice(funded)
        dst = rng.choice([p for p in own if p != src])
        ins = spend_all(src)
        if rng.randbelow(2) and len(funded) > 1:
            other = rng.choice([p for p in funded if p != src])
            ins += spend_all(other)
        total = sum(v for _, v in ins) - 1_000
        if rng.randbelow(2):
            keep = total // 3
            outs = [(dst, total - keep), (src, keep)]
            credit(src, keep)
        else:
            outs = [(dst, total)]
        credit(dst, outs[0][1])
        b.add(ins, outs, at=clock)

    # withdrawals
    aggregators: list[str] = []
    collectors: list[str] = []

    def sweep(addrs: list[str], at: int) -> None:
        order = list(addrs)
        rng.shuffle(order)
        for i in range(0, len(order), spec.batch_size):
            ins = [slot for a in order[i : i + spec.batch_size] for slot in spend_all(a)]
            c = f"C{len(collectors):06d}"
            collectors.append(c)
            b.add(ins, [(c, sum(v for _, v in ins) - 2_000)], at=at)

    funded = [p for p in own if p in utxos]
    if spec.topology == DIRECT_MULTI_INPUT:
        sweep(funded, clock + 86_400)
    elif spec.topology == AGGREGATED_ONE_TO_N:
        for p in funded:
            clock += 60
            ins = spend_all(p)
            a = f"A{len(aggregators):07d}"
            aggregators.append(a)
            moved = sum(v for _, v in ins) - 1_000
            b.add(ins, [(a, moved)], at=clock)
            credit(a, moved)
        sweep(aggregators, clock + 86_400)

    # the service sweeps its deposit addresses into its hot wallet
    if service:
        hot = service[0]
        at = clock + 2 * 86_400
        rest = [e for e in service[1:] if e in utxos]
        for i in range(0, len(rest), 100):
            ins = spend_all(hot) + [s for e in rest[i : i + 100] for s in spend_all(e)]
            total = sum(v for _, v in ins) - 5_000
            b.add(ins, [(hot, total)], at=at + i)
            credit(hot, total)

    # seeds
    if spec.seed_sample_size is None:
        seeds = list(payment_addrs)
    else:
        if spec.seed_sample_size > len(payment_addrs):
            raise EstimaError(
                f"seed sample of {spec.seed_sample_size} exceeds {len(payment_addrs)} payment addresses"
            )
        picked = set(rng.sample(payment_addrs, spec.seed_sample_size))
        if wallet_at_service and picked and wallet_at_service not in picked:
            picked.discard(min(picked))
            picked.add(wallet_at_service)
        seeds = [p for p in payment_addrs if p in picked]

    tags = ()
    if service and spec.service_tagged:
        tags = (TagRecord(service[0], "synthetic-exchange", "exchange"),)
    truth = GroundTruth(
        payment_addresses=tuple(payment_addrs),
        payments=tuple(payments),
        seeds=tuple(seeds),
        release_addresses=tuple(release_addrs),
        owner_addresses=tuple(own + aggregators + collectors),
        tags=tags,
        extra={
            "service_addresses": len(service),
            "online_wallet": wallet_at_service,
            "release_txids": release_txids,
        },
    )
    return b.transactions(), truth


def _near_miss(j: int, rng: XorShift64Star) -> tuple[list, list]:
    """Transactions one structural detail away from a key release."""
    k, p, x = f"M{j:06d}", f"Q{j:06d}", f"X{j:06d}"
    key = op_return(_key(rng))
    kind = j % 8
    ins = [(k, 100_000)]
    if kind == 0:
        outs = [TxSlot(p, RELEASE_VALUE + 1), TxSlot(k, 90_000), key]
    elif kind == 1:
        outs = [TxSlot(p, RELEASE_VALUE - 1), TxSlot(k, 90_000), key]
    elif kind == 2:
        outs = [TxSlot(p, RELEASE_VALUE), TxSlot(k, 80_000), key, TxSlot(x, 7_000)]
    elif kind == 3:
        outs = [TxSlot(p, RELEASE_VALUE), TxSlot(k, 90_000)]
    elif kind == 4:
        ins = [(k, 50_000), (x, 50_000)]
        outs = [TxSlot(p, RELEASE_VALUE), TxSlot(k, 90_000), key]
    elif kind == 5:
        outs = [TxSlot(p, RELEASE_VALUE), TxSlot(x, 90_000), key]
    elif kind == 6:
        outs = [TxSlot(p, RELEASE_VALUE), TxSlot(k, 90_000), TxSlot(x, 1_000)]
    else:
        outs = [TxSlot(p, RELEASE_VALUE), key, op_return(_key(rng))]
    rng.shuffle(outs)
    return ins, outs


# --- small structural fixtures --------------------------------------------


def gen_snowball() -> tuple[Ledger, dict[str, set[str]]]:
    """Three unrelated actors chained by payments to fresh addresses with reused change.

    The freshness heuristic mistakes each payee's fresh address for the
    payer's change, so MI+CA merges all three actors while MI keeps them apart.
    """
    b = LedgerBuilder("snowball")
    for a in ("x_a", "x_b", "y_b", "z_b"):
        b.add([], [(a, 500_000)])
    b.add([("x_a", 500_000), ("x_b", 500_000)], [("y_new", 400_000), ("x_a", 599_000)])
    b.add([("y_new", 400_000), ("y_b", 500_000)], [("z_new", 300_000), ("y_new", 599_000)])
    b.add([("z_new", 300_000), ("z_b", 500_000)], [("sink", 799_000)])
    actors = {
        "X": {"x_a", "x_b"},
        "Y": {"y_new", "y_b"},
        "Z": {"z_new", "z_b"},
    }
    return b.build(), actors


def gen_ca_collapse(exchange_size: int = 40, customer_deposits: int = 200) -> tuple[Ledger, GroundTruth]:
    """Seeds whose change-address cluster runs into a tagged exchange.

    Each seed pays a fresh exchange deposit address and keeps change on
    itself, so the freshness heuristic labels the exchange address as the
    seed's change. The exchange sweeps all deposit addresses together.
    """
    rng = XorShift64Star(7)
    b = LedgerBuilder("ca-collapse")
    exchange = [f"X{i:04d}" for i in range(exchange_size)]
    utxos: dict[str, int] = {}
    for j in range(customer_deposits):
        e = exchange[j % exchange_size]
        v = 100_000 + rng.randbelow(50_000_000)
        b.add([(f"U{j:05d}", v + 1_000)], [(e, v)])
        utxos[e] = utxos.get(e, 0) + v
    seeds = ("S1", "S2")
    payments = []
    for i, s in enumerate(seeds):
        for n in range(3):
            txid = b.add([(f"V{i}{n}", RANSOM + VICTIM_FEE)], [(s, RANSOM)])
            payments.append((txid, s, RANSOM))
    for i, s in enumerate(seeds):
        dep = f"XD{i}"
        b.add([(s, RANSOM)] * 3, [(dep, 2 * RANSOM), (s, RANSOM - 5_000)])
        utxos[dep] = 2 * RANSOM
    hot = exchange[0]
    rest = [a for a in list(utxos) if a != hot]
    ins = [(hot, utxos[hot])] + [(a, utxos[a]) for a in rest]
    b.add(ins, [(hot, sum(v for _, v in ins) - 10_000)])
    truth = GroundTruth(
        payment_addresses=seeds,
        payments=tuple(payments),
        seeds=seeds,
        tags=(TagRecord(hot, "synthetic-exchange", "exchange"),),
        extra={"exchange_addresses": exchange + ["XD0", "XD1"]},
    )
    return b.build(), truth


def gen_evasion_fixture(
    n_groups: int = 10, one_to_n_groups: int = 4, silent_groups: int = 0
) -> tuple[Ledger, SeedSet]:
    """Labelled seed groups with controlled withdrawal shapes.

    The first ``one_to_n_groups`` groups only withdraw 1-to-1; the rest mix
    multi-input and 1-to-n withdrawals so their proportion is below 1;
    ``silent_groups`` extra groups never withdraw.
    """
    b = LedgerBuilder("evasion")
    entries = []
    victim = 0

    def paid(label: str, addr: str) -> str:
        nonlocal victim
        victim += 1
        b.add([(f"V{victim:05d}", RANSOM + VICTIM_FEE)], [(addr, RANSOM)])
        entries.append(SeedEntry(addr, label))
        return addr

    for g in range(n_groups + silent_groups):
        label = f"group{g:02d}"
        if g >= n_groups:
            paid(label, f"{label}-p0")
            continue
        if g < one_to_n_groups:
            multi, single = 0, 1 + g % 3
        else:
            j = g - one_to_n_groups
            multi, single = 1 + j % 3, j % 4
        n = 0
        for m in range(multi):
            a, c = paid(label, f"{label}-p{n}"), paid(label, f"{label}-p{n + 1}")
            n += 2
            b.add([(a, RANSOM), (c, RANSOM)], [(f"{label}-c{m}", 2 * RANSOM - 1_000)], at=b._clock + 86_400)
        for s in range(single):
            a = paid(label, f"{label}-p{n}")
            n += 1
            b.add([(a, RANSOM)], [(f"{label}-o{s}", RANSOM - 1_000)], at=b._clock + 86_400)
    return b.build(), SeedSet(entries)


def gen_conversion_fixture(
    addresses: int = 1_000, payers: int = 7, repeat_payers: int = 2, off_range: int = 3
) -> tuple[Ledger, list[str]]:
    """Payment addresses that all got a key release but only ``payers`` paid a valid ransom."""
    b = LedgerBuilder("conversion")
    addrs = [f"P{i:05d}" for i in range(addresses)]
    k_balance = 10 * 100_000_000
    b.add([], [("K0", k_balance)], at=0)
    v = 0
    for i, p in enumerate(addrs):
        if i < payers:
            for _ in range(2 if i < repeat_payers else 1):
                v += 1
                b.add([(f"V{v:05d}", RANSOM + VICTIM_FEE)], [(p, RANSOM)])
        elif i < payers + off_range:
            v += 1
            b.add([(f"V{v:05d}", 4_000_000 + VICTIM_FEE)], [(p, 4_000_000)])
        change = k_balance - RELEASE_VALUE - 1_000
        b.add([("K0", k_balance)], [(p, RELEASE_VALUE), ("K0", change), op_return(bytes(16))])
        k_balance = change
    return b.build(), addrs


def gen_random_ledger(rng_seed: int, n_txs: int = 200, n_addresses: int = 60) -> Ledger:
    """Random small ledger for oracle comparisons; includes CoinJoin-shaped transactions."""
    rng = XorShift64Star(rng_seed)
    b = LedgerBuilder(f"random:{rng_seed}", step=21_600)
    pool = [f"a{i:03d}" for i in range(n_addresses)]
    for _ in range(n_txs):
        kind = rng.randbelow(10)
        if kind == 0:
            b.add([], [(rng.choice(pool), 5_000_000_000)])
            continue
        if kind == 1:
            k = 2 + rng.randbelow(3)
            ins = [(a, 200_000) for a in rng.sample(pool, k + rng.randbelow(2))]
            outs = [(rng.choice(pool), 100_000) for _ in range(k)]
            outs += [(rng.choice(pool), 1_000 + rng.randbelow(50_000))]
            b.add(ins, outs)
            continue
        nin = 1 + rng.randbelow(3)
        ins = [(rng.choice(pool), 1 + rng.randbelow(1_000_000)) for _ in range(nin)]
        budget = sum(v for _, v in ins)
        nout = 1 + rng.randbelow(3)
        outs = []
        for _ in range(nout):
            v = rng.randbelow(budget + 1)
            budget -= v
            outs.append((rng.choice(pool), v))
        b.add(ins, outs)
    return b.build()


def synthetic_rates(start: date, end: date, rng_seed: int = 0, base_cents: int = 3_000_000) -> RateTable:
    """A deterministic random-walk price series, one rate per day."""
    rng = XorShift64Star(rng_seed)
    out = {}
    cents = base_cents
    day = start
    while day <= end:
        out[day] = cents
        cents = max(100_000, cents + rng.randint(-cents // 50, cents // 50))
        day += timedelta(days=1)
    return RateTable(out)


# --- oracles --------------------------------------------------------------

ORACLE_MAX_TXS = 2_000


def _oracle_mi(ledger: Ledger, height: int, exclude_coinjoin: bool, max_txs: int):
    txs = ledger.transactions(height)
    if len(txs) > max_txs:
        raise EstimaError(f"oracle limited to {max_txs} transactions, ledger has {len(txs)}")
    groups: list[set[str]] = []
    for tx in txs:
        if not tx.is_coinbase and not (exclude_coinjoin and detect_coinjoin(tx).is_coinjoin):
            groups.append({s.address for s in tx.inputs})
        for s in tx.inputs + tx.outputs:
            if s.address is not None:
                groups.append({s.address})
    passes = 0
    changed = True
    while changed:
        changed = False
        passes += 1
        merged: list[set[str]] = []
        for g in groups:
            for m in merged:
                if m & g:
                    m |= g
                    changed = True
                    break
            else:
                merged.append(set(g))
        groups = merged
    return {frozenset(g) for g in groups}, passes


def oracle_mi(
    ledger: Ledger, height: int, exclude_coinjoin: bool = True, max_txs: int = ORACLE_MAX_TXS
) -> set[frozenset[str]]:
    """MI clusters by repeated pairwise merging until nothing changes."""
    return _oracle_mi(ledger, height, exclude_coinjoin, max_txs)[0]


def oracle_revenue(truth: GroundTruth) -> int:
    return sum(v for _, _, v in truth.payments)


def oracle_scan(
    ledger: Ledger,
    from_height: int,
    to_height: int,
    release_value: int = RELEASE_VALUE,
    omni_filter: bool = True,
    max_txs: int = 10_000,
) -> list[KeyReleaseMatch]:
    """Key-release matches by trying every role assignment of the three outputs."""
    txs = [t for t in ledger if from_height <= t.height <= to_height]
    if len(txs) > max_txs:
        raise EstimaError(f"oracle limited to {max_txs} transactions")
    found = []
    for tx in txs:
        senders = {s.address for s in tx.inputs}
        if len(senders) != 1 or len(tx.outputs) != 3:
            continue
        (sender,) = senders
        for data, pay, change in permutations(tx.outputs):
            if (
                data.address is None
                and pay.address is not None
                and pay.address != sender
                and pay.value == release_value
                and change.address == sender
                and not (omni_filter and (data.payload or b"").startswith(OMNI_PREFIX))
            ):
                found.append(
                    KeyReleaseMatch(
                        tx.txid, sender, pay.address, data.payload or b"", tx.height,
                        tx.timestamp, len(tx.inputs),
                    )
                )
                break
    return found
