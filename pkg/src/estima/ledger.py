"""UTXO ledger: JSON-lines wire format, validation and height-bounded queries.

All amounts are integer satoshis. A ledger is immutable once built; every
query takes a block height and only sees transactions at or below it.
"""

from __future__ import annotations

import json
from bisect import bisect_right
from dataclasses import dataclass
from datetime import date, datetime, timezone
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple

from .address import validate_btc_address
from .errors import LedgerError

SATOSHIS_PER_BTC = 100_000_000


class TxSlot(NamedTuple):
    """One input or output slot. ``address`` is None for OP_RETURN outputs."""

    address: str | None
    value: int
    payload: bytes | None = None

    @property
    def is_op_return(self) -> bool:
        return self.address is None


@dataclass(slots=True)
class Transaction:
    txid: str
    height: int
    timestamp: datetime
    inputs: tuple[TxSlot, ...]
    outputs: tuple[TxSlot, ...]

    @property
    def is_coinbase(self) -> bool:
        return not self.inputs

    @property
    def day(self) -> date:
        """UTC calendar date, used for rate lookups and time filters."""
        return self.timestamp.date()

    @property
    def input_addresses(self) -> tuple[str, ...]:
        """Distinct input addresses in slot order."""
        return tuple(dict.fromkeys(s.address for s in self.inputs))

    @property
    def output_addresses(self) -> tuple[str, ...]:
        """Distinct non-OP_RETURN output addresses in slot order."""
        return tuple(dict.fromkeys(s.address for s in self.outputs if s.address is not None))

    @property
    def input_value(self) -> int:
        return sum(s.value for s in self.inputs)

    @property
    def output_value(self) -> int:
        return sum(s.value for s in self.outputs)

    @property
    def fee(self) -> int:
        return 0 if self.is_coinbase else self.input_value - self.output_value

    def value_to(self, address: str) -> int:
        return sum(s.value for s in self.outputs if s.address == address)


class Deposit(NamedTuple):
    txid: str
    recipient: str
    value: int
    timestamp: datetime
    height: int

    @property
    def day(self) -> date:
        return self.timestamp.date()


def format_btc(satoshis: int) -> str:
    """Render satoshis as BTC with 8 decimals, without going through floats."""
    sign = "-" if satoshis < 0 else ""
    whole, frac = divmod(abs(satoshis), SATOSHIS_PER_BTC)
    return f"{sign}{whole}.{frac:08d}"


def parse_timestamp(text: str) -> datetime:
    if not isinstance(text, str):
        raise ValueError("time must be a string")
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        raise ValueError("time must carry a UTC designator")
    return ts.astimezone(timezone.utc)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _is_sats(v) -> bool:
    return type(v) is int and v >= 0


def _parse_slot(obj, allow_op_return: bool) -> TxSlot:
    if not isinstance(obj, dict):
        raise ValueError("slot must be an object")
    value = obj.get("value")
    if type(value) is not int:
        raise ValueError("slot value must be an integer number of satoshis")
    if value < 0:
        raise ValueError(f"negative value {value}")
    if "op_return" in obj:
        if not allow_op_return:
            raise ValueError("OP_RETURN is only allowed in outputs")
        if "addr" in obj:
            raise ValueError("slot has both addr and op_return")
        return TxSlot(None, value, bytes.fromhex(obj["op_return"]))
    addr = obj.get("addr")
    if not isinstance(addr, str):
        raise ValueError("slot is missing addr")
    return TxSlot(addr, value)


def parse_tx(obj: dict) -> Transaction:
    """Build a Transaction from one decoded wire-format object (no invariant checks)."""
    if not isinstance(obj, dict):
        raise ValueError("transaction must be a JSON object")
    txid = obj.get("txid")
    if not isinstance(txid, str) or not txid:
        raise ValueError("missing txid")
    height = obj.get("height")
    if type(height) is not int or height < 0:
        raise ValueError(f"{txid}: height must be a non-negative integer")
    try:
        ts = parse_timestamp(obj.get("time"))
        inputs = tuple(_parse_slot(s, False) for s in obj.get("inputs", ()))
        outputs = tuple(_parse_slot(s, True) for s in obj.get("outputs", ()))
    except (ValueError, TypeError) as exc:
        raise ValueError(f"{txid}: {exc}") from None
    return Transaction(txid, height, ts, inputs, outputs)


def tx_to_wire(tx: Transaction) -> dict:
    def slot(s: TxSlot) -> dict:
        if s.address is None:
            return {"op_return": (s.payload or b"").hex(), "value": s.value}
        return {"addr": s.address, "value": s.value}

    return {
        "txid": tx.txid,
        "height": tx.height,
        "time": format_timestamp(tx.timestamp),
        "inputs": [slot(s) for s in tx.inputs],
        "outputs": [slot(s) for s in tx.outputs],
    }


def format_tx(tx: Transaction) -> str:
    return json.dumps(tx_to_wire(tx), separators=(",", ":"))


def dump_ledger(txs: Iterable[Transaction], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for tx in txs:
            fh.write(format_tx(tx))
            fh.write("\n")


def check_tx(tx: Transaction, strict: bool = False) -> None:
    """Enforce the per-transaction invariants; raise ValueError naming the txid."""
    if not tx.outputs:
        raise ValueError(f"{tx.txid}: transaction has no outputs")
    for s in tx.inputs:
        if s.address is None:
            raise ValueError(f"{tx.txid}: OP_RETURN in inputs")
    for s in tx.inputs + tx.outputs:
        if not _is_sats(s.value):
            raise ValueError(f"{tx.txid}: invalid value {s.value!r}")
        a = s.address
        if a is None:
            continue
        if not a or a != "".join(a.split()):
            raise ValueError(f"{tx.txid}: invalid address {a!r}")
        if strict and not validate_btc_address(a):
            raise ValueError(f"{tx.txid}: address {a} fails checksum validation")
    if tx.inputs:
        fee = tx.input_value - tx.output_value
        if fee < 0:
            raise ValueError(
                f"{tx.txid}: outputs ({tx.output_value}) exceed inputs ({tx.input_value})"
            )


class Ledger:
    """Immutable, height-indexed transaction store.

    Addresses get integer ids in order of first appearance (inputs before
    outputs within a transaction), which the clustering code uses as
    deterministic cluster ids.
    """

    def __init__(self, transactions: Iterable[Transaction], strict: bool = False):
        txs = list(transactions)
        seen: set[str] = set()
        for tx in txs:
            try:
                check_tx(tx, strict)
            except ValueError as exc:
                raise LedgerError(str(exc)) from None
            if tx.txid in seen:
                raise LedgerError(f"duplicate txid {tx.txid}")
            seen.add(tx.txid)
        txs.sort(key=lambda t: t.height)
        self._build(txs)

    def _build(self, txs: list[Transaction]) -> None:
        self._txs = txs
        self._heights = [t.height for t in txs]
        self._pos = {t.txid: i for i, t in enumerate(txs)}
        ids: dict[str, int] = {}
        addrs: list[str] = []
        first_pos: list[int] = []
        dep: list[list[int] | None] = []
        wd: list[list[int] | None] = []
        count_after: list[int] = []
        for pos, tx in enumerate(txs):
            for s in tx.inputs:
                a = s.address
                aid = ids.get(a)
                if aid is None:
                    aid = ids[a] = len(addrs)
                    addrs.append(a)
                    first_pos.append(pos)
                    dep.append(None)
                    wd.append([pos])
                    continue
                lst = wd[aid]
                if lst is None:
                    wd[aid] = [pos]
                elif lst[-1] != pos:
                    lst.append(pos)
            for s in tx.outputs:
                a = s.address
                if a is None:
                    continue
                aid = ids.get(a)
                if aid is None:
                    aid = ids[a] = len(addrs)
                    addrs.append(a)
                    first_pos.append(pos)
                    dep.append([pos])
                    wd.append(None)
                    continue
                lst = dep[aid]
                if lst is None:
                    dep[aid] = [pos]
                elif lst[-1] != pos:
                    lst.append(pos)
            count_after.append(len(addrs))
        self._ids = ids
        self._addrs = addrs
        self._first_pos = first_pos
        self._dep = dep
        self._wd = wd
        self._count_after = count_after

    # construction -------------------------------------------------------

    @classmethod
    def from_lines(cls, lines: Iterable[str], strict: bool = False) -> "Ledger":
        txs = []
        lineno_of: dict[str, int] = {}
        loads = json.loads
        for lineno, line in enumerate(lines, 1):
            if not line.strip():
                continue
            try:
                tx = parse_tx(loads(line))
            except (ValueError, TypeError) as exc:
                raise LedgerError(f"line {lineno}: {exc}") from None
            if tx.txid in lineno_of:
                raise LedgerError(
                    f"line {lineno}: duplicate txid {tx.txid} (first on line {lineno_of[tx.txid]})"
                )
            lineno_of[tx.txid] = lineno
            try:
                check_tx(tx, strict)
            except ValueError as exc:
                raise LedgerError(f"line {lineno}: {exc}") from None
            txs.append(tx)
        self = cls.__new__(cls)
        txs.sort(key=lambda t: t.height)
        self._build(txs)
        return self

    # basic access -------------------------------------------------------

    def __len__(self) -> int:
        return len(self._txs)

    def __iter__(self) -> Iterator[Transaction]:
        return iter(self._txs)

    @property
    def max_height(self) -> int:
        return self._heights[-1] if self._heights else 0

    def end_position(self, height: int) -> int:
        """Number of transactions with height <= ``height``."""
        return bisect_right(self._heights, height)

    def start_position(self, height: int) -> int:
        """Index of the first transaction with height >= ``height``."""
        return bisect_right(self._heights, height - 1)

    def transactions(self, height: int | None = None, from_height: int = 0) -> list[Transaction]:
        end = len(self._txs) if height is None else self.end_position(height)
        return self._txs[self.start_position(from_height) if from_height > 0 else 0:end]

    def tx(self, txid: str) -> Transaction:
        return self._txs[self._pos[txid]]

    def position(self, txid: str) -> int:
        return self._pos[txid]

    def __contains__(self, txid: str) -> bool:
        return txid in self._pos

    # addresses ----------------------------------------------------------

    def address_count(self, height: int | None = None) -> int:
        if height is None:
            return len(self._addrs)
        end = self.end_position(height)
        return self._count_after[end - 1] if end else 0

    def addresses(self, height: int | None = None) -> list[str]:
        """Addresses seen at or below ``height`` in first-appearance order."""
        return self._addrs[: self.address_count(height)]

    def address_id(self, address: str) -> int | None:
        return self._ids.get(address)

    def address_at(self, aid: int) -> str:
        return self._addrs[aid]

    def first_position(self, address: str) -> int | None:
        """Ledger position of the transaction where ``address`` first appears."""
        aid = self._ids.get(address)
        return None if aid is None else self._first_pos[aid]

    def deposit_positions(self, address: str, height: int) -> list[int]:
        aid = self._ids.get(address)
        if aid is None or self._dep[aid] is None:
            return []
        lst = self._dep[aid]
        return lst[: bisect_right(lst, self.end_position(height) - 1)]

    def withdrawal_positions(self, address: str, height: int) -> list[int]:
        aid = self._ids.get(address)
        if aid is None or self._wd[aid] is None:
            return []
        lst = self._wd[aid]
        return lst[: bisect_right(lst, self.end_position(height) - 1)]

    # queries ------------------------------------------------------------

    def deposits_to(self, addresses: Iterable[str], height: int) -> list[Deposit]:
        """One Deposit per (tx, recipient) for recipients in ``addresses``, sorted by (height, txid)."""
        end = self.end_position(height)
        txs = self._txs
        out = []
        for a in set(addresses):
            aid = self._ids.get(a)
            if aid is None:
                continue
            lst = self._dep[aid]
            if lst is None:
                continue
            for pos in lst:
                if pos >= end:
                    break
                tx = txs[pos]
                value = 0
                for s in tx.outputs:
                    if s.address == a:
                        value += s.value
                if value > 0:
                    out.append(Deposit(tx.txid, a, value, tx.timestamp, tx.height))
        out.sort(key=lambda d: (d.height, d.txid, d.recipient))
        return out

    def withdrawals_from(self, addresses: Iterable[str], height: int) -> list[Transaction]:
        """Transactions at or below ``height`` spending from any of ``addresses``, in ledger order."""
        end = self.end_position(height)
        positions: set[int] = set()
        for a in set(addresses):
            aid = self._ids.get(a)
            if aid is None or self._wd[aid] is None:
                continue
            for pos in self._wd[aid]:
                if pos >= end:
                    break
                positions.add(pos)
        return [self._txs[p] for p in sorted(positions)]


def load_ledger(path, strict_validation: bool = False) -> Ledger:
    """Load a JSON-lines ledger file; raises LedgerError with the offending line number."""
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        return Ledger.from_lines(fh, strict=strict_validation)
