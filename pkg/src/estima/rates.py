"""Historical BTC->USD rates and deposit conversion in integer cents."""

from __future__ import annotations

import csv
from bisect import bisect_left
from datetime import date
from decimal import ROUND_HALF_EVEN, Decimal, InvalidOperation
from typing import Iterable, Mapping, NamedTuple

from .errors import EstimaError, MissingRateError
from .ledger import SATOSHIS_PER_BTC, Deposit

STRICT = "strict"
PREVIOUS_DAY = "previous_day"


class RateTable:
    """UTC date -> USD cents per BTC."""

    def __init__(self, rates: Mapping[date, int] | Iterable[tuple[date, int]] = ()):
        items = rates.items() if isinstance(rates, Mapping) else rates
        self._cents: dict[date, int] = {}
        for day, cents in items:
            if day in self._cents:
                raise EstimaError(f"duplicate rate for {day.isoformat()}")
            if type(cents) is not int or cents <= 0:
                raise EstimaError(f"rate for {day.isoformat()} must be positive")
            self._cents[day] = cents
        self._days = sorted(self._cents)

    def __len__(self) -> int:
        return len(self._cents)

    def __contains__(self, day: date) -> bool:
        return day in self._cents

    def cents_per_btc(self, day: date, fallback: str = STRICT) -> int:
        cents = self._cents.get(day)
        if cents is not None:
            return cents
        if fallback == PREVIOUS_DAY:
            i = bisect_left(self._days, day)
            if i > 0:
                return self._cents[self._days[i - 1]]
        elif fallback != STRICT:
            raise EstimaError(f"unknown rate fallback {fallback!r}")
        raise MissingRateError(f"no BTC/USD rate for {day.isoformat()}")

    def items(self):
        return ((d, self._cents[d]) for d in self._days)


def parse_usd_cents(text: str) -> int:
    """'36654.00' -> 3665400; more than two decimals are rounded half-even."""
    try:
        amount = Decimal(text.strip())
    except InvalidOperation:
        raise EstimaError(f"unparseable rate {text!r}") from None
    if not amount.is_finite():
        raise EstimaError(f"unparseable rate {text!r}")
    return int((amount * 100).quantize(Decimal(1), rounding=ROUND_HALF_EVEN))


def load_rates(path) -> RateTable:
    """Read a ``date,usd_per_btc`` CSV; a header row is optional."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or not "".join(row).strip():
                continue
            if lineno == 1 and row[0].strip().lower() == "date":
                continue
            if len(row) != 2:
                raise EstimaError(f"{path}: line {lineno}: expected date,usd_per_btc")
            try:
                day = date.fromisoformat(row[0].strip())
            except ValueError:
                raise EstimaError(f"{path}: line {lineno}: unparseable date {row[0]!r}") from None
            cents = parse_usd_cents(row[1])
            if cents <= 0:
                raise EstimaError(f"{path}: line {lineno}: rate must be positive")
            rows.append((day, cents))
    return RateTable(rows)


def rates_csv(table: RateTable) -> str:
    lines = ["date,usd_per_btc"]
    lines += [f"{d.isoformat()},{format_usd(c)}" for d, c in table.items()]
    return "\n".join(lines) + "\n"


def satoshis_to_cents(satoshis: int, cents_per_btc: int) -> int:
    """Exact product, rounded half-to-even to whole cents."""
    q, r = divmod(satoshis * cents_per_btc, SATOSHIS_PER_BTC)
    twice = 2 * r
    if twice > SATOSHIS_PER_BTC or (twice == SATOSHIS_PER_BTC and q % 2 == 1):
        q += 1
    return q


class Conversion(NamedTuple):
    total_cents: int
    per_deposit: tuple[int, ...]


def convert(
    deposits: Iterable[Deposit],
    table: RateTable,
    fixed_day: date | None = None,
    fallback: str = STRICT,
) -> Conversion:
    """Convert deposits to USD cents.

    With ``fixed_day`` unset each deposit uses the rate of its own UTC day;
    otherwise every deposit uses the rate of ``fixed_day``.
    """
    per = []
    fixed = None if fixed_day is None else table.cents_per_btc(fixed_day, fallback)
    for d in deposits:
        rate = fixed if fixed is not None else table.cents_per_btc(d.day, fallback)
        per.append(satoshis_to_cents(d.value, rate))
    return Conversion(sum(per), tuple(per))


def format_usd(cents: int) -> str:
    sign = "-" if cents < 0 else ""
    whole, frac = divmod(abs(cents), 100)
    return f"{sign}{whole}.{frac:02d}"
