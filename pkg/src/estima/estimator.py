"""Revenue estimation: expansion, deposit collection, filtering and conversion.

The pipeline always runs in the same order regardless of how the
methodology name was written: expansion, online-wallet restriction,
deposit collection, then the DC, TF and VF filters, then the satoshi sum
and USD conversion.
"""

from __future__ import annotations

import csv
import io
import json
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import date
from decimal import Decimal
from typing import Iterable, NamedTuple, Sequence

from .clustering import ClusterIndex, build_mi_clusters, build_mica_clusters
from .errors import EstimaError, InvariantError
from .ledger import SATOSHIS_PER_BTC, Deposit, Ledger, format_btc
from .methodology import SELECTED_METHODOLOGIES, MethodologySpec, parse_methodology
from .rates import STRICT, RateTable, convert, format_usd
from .tags import OwPolicy, TagTable, classify_cluster

# seeds whose cluster reaches this size get a warning in the report
LARGE_CLUSTER_WARNING = 100_000

UNLABELED = ""


# --- seeds ----------------------------------------------------------------


class SeedEntry(NamedTuple):
    address: str
    group: str | None = None


class SeedSet:
    """Payment addresses with optional group labels.

    Entries without deposits at the analysis height are kept but are not
    seeds; :meth:`seeds` returns only the addresses that are.
    """

    def __init__(self, entries: Iterable[SeedEntry | str | tuple]):
        self.entries: list[SeedEntry] = []
        seen = set()
        for e in entries:
            e = SeedEntry(e) if isinstance(e, str) else SeedEntry(*e)
            if e.address in seen:
                raise EstimaError(f"duplicate seed address {e.address}")
            seen.add(e.address)
            self.entries.append(e)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def addresses(self) -> list[str]:
        return [e.address for e in self.entries]

    def seeds(self, ledger: Ledger, height: int) -> list[str]:
        return [a for a in self.addresses if ledger.deposit_positions(a, height)]

    def groups(self) -> dict[str, "SeedSet"]:
        out: dict[str, list[SeedEntry]] = {}
        for e in self.entries:
            out.setdefault(e.group or UNLABELED, []).append(e)
        return {label: SeedSet(out[label]) for label in sorted(out)}


def as_seedset(seeds) -> SeedSet:
    return seeds if isinstance(seeds, SeedSet) else SeedSet(seeds)


def load_seeds(path) -> SeedSet:
    """CSV of ``address[,group_label]``; an ``address`` header row is skipped."""
    entries = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            row = [c.strip() for c in row]
            if not row or not row[0]:
                continue
            if lineno == 1 and row[0].lower() == "address":
                continue
            if len(row) > 2:
                raise EstimaError(f"{path}: line {lineno}: expected address[,group_label]")
            entries.append(SeedEntry(row[0], row[1] if len(row) == 2 and row[1] else None))
    return SeedSet(entries)


# --- filter ranges --------------------------------------------------------


class FilterRange(NamedTuple):
    start: date
    end: date
    values: tuple[tuple[int, int], ...]

    def contains_day(self, day: date) -> bool:
        return self.start <= day <= self.end

    def contains_value(self, value: int) -> bool:
        return any(lo <= value <= hi for lo, hi in self.values)


FilterRanges = Sequence[FilterRange]


def btc_to_satoshis(amount) -> int:
    """Exact conversion of a decimal BTC amount (str, int or Decimal)."""
    sats = Decimal(str(amount)) * SATOSHIS_PER_BTC
    if sats != sats.to_integral_value():
        raise EstimaError(f"BTC amount {amount} has more than 8 decimals")
    return int(sats)


def ranges_from_json(obj) -> list[FilterRange]:
    if not isinstance(obj, list):
        raise EstimaError("ranges must be a JSON list")
    out = []
    for i, entry in enumerate(obj):
        try:
            start = date.fromisoformat(entry["from"])
            end = date.fromisoformat(entry["to"])
            values = tuple(
                (btc_to_satoshis(lo), btc_to_satoshis(hi)) for lo, hi in entry.get("values_btc", [])
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise EstimaError(f"ranges entry {i}: {exc}") from None
        if start > end:
            raise EstimaError(f"ranges entry {i}: from is after to")
        if any(lo > hi for lo, hi in values):
            raise EstimaError(f"ranges entry {i}: value interval with lo > hi")
        out.append(FilterRange(start, end, values))
    return out


def load_ranges(path) -> list[FilterRange]:
    with open(path, encoding="utf-8") as fh:
        # Decimal keeps 0.029 exact
        return ranges_from_json(json.load(fh, parse_float=Decimal))


def ranges_to_json(ranges: FilterRanges) -> list[dict]:
    return [
        {
            "from": r.start.isoformat(),
            "to": r.end.isoformat(),
            "values_btc": [[format_btc(lo), format_btc(hi)] for lo, hi in r.values],
        }
        for r in ranges
    ]


# --- expansion ------------------------------------------------------------

SEED_ONLY = "seed_only"


@dataclass(frozen=True)
class ExpandedSet:
    addresses: frozenset[str]
    seeds: tuple[str, ...]
    provenance: dict = field(default_factory=dict)  # seed -> SEED_ONLY | cluster id
    ow_seeds: frozenset[str] = frozenset()
    cluster_ids: frozenset[int] = frozenset()
    warnings: tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.addresses)

    def __contains__(self, address: str) -> bool:
        return address in self.addresses


class ClusterCache:
    """Lazily built MI / MI+CA partitions for one ledger and height."""

    def __init__(self, ledger: Ledger, height: int, exclude_coinjoin: bool = True):
        self.ledger = ledger
        self.height = height
        self.exclude_coinjoin = exclude_coinjoin
        self._built: dict[str, ClusterIndex] = {}

    def get(self, kind: str) -> ClusterIndex:
        idx = self._built.get(kind)
        if idx is None:
            build = build_mica_clusters if kind == "MI+CA" else build_mi_clusters
            idx = self._built[kind] = build(self.ledger, self.height, self.exclude_coinjoin)
        return idx


def expand(
    seeds,
    spec: MethodologySpec,
    ledger: Ledger,
    height: int,
    tags: TagTable | None = None,
    ow_policy: OwPolicy = OwPolicy(),
    clusters: ClusterIndex | None = None,
) -> ExpandedSet:
    seed_addrs = tuple(as_seedset(seeds).seeds(ledger, height))
    kind = spec.clustering
    if kind is None:
        return ExpandedSet(frozenset(seed_addrs), seed_addrs, {s: SEED_ONLY for s in seed_addrs})
    if clusters is None:
        clusters = ClusterCache(ledger, height).get(kind)
    elif clusters.kind != kind:
        raise EstimaError(f"{spec} needs {kind} clusters, got {clusters.kind}")
    use_ow = "OW" in spec.filters
    addresses: set[str] = set()
    provenance = {}
    ow_seeds = set()
    cluster_ids = set()
    verdicts: dict[int, bool] = {}
    added: set[int] = set()
    warnings = []
    for s in seed_addrs:
        cid, size = clusters.cluster_of(s)
        cluster_ids.add(cid)
        if use_ow:
            service = verdicts.get(cid)
            if service is None:
                service = verdicts[cid] = classify_cluster(
                    cid, clusters, tags, ow_policy.policy, ow_policy.threshold
                ).is_service
            if service:
                ow_seeds.add(s)
                provenance[s] = SEED_ONLY
                addresses.add(s)
                continue
        provenance[s] = cid
        if cid in added:
            continue
        added.add(cid)
        addresses.update(clusters.members(cid))
        if size >= LARGE_CLUSTER_WARNING:
            warnings.append(f"seed {s} is in a {kind} cluster of {size} addresses")
    return ExpandedSet(
        frozenset(addresses),
        seed_addrs,
        provenance,
        frozenset(ow_seeds),
        frozenset(cluster_ids),
        tuple(dict.fromkeys(warnings)),
    )


def collect(expanded: ExpandedSet, ledger: Ledger, height: int) -> list[Deposit]:
    return ledger.deposits_to(expanded.addresses, height)


# --- filters --------------------------------------------------------------


def filter_dc(deposits: Iterable[Deposit], expanded: ExpandedSet | Iterable[str], ledger: Ledger) -> list[Deposit]:
    """Drop deposits whose transaction spends from the expanded set."""
    members = expanded.addresses if isinstance(expanded, ExpandedSet) else frozenset(expanded)
    internal: dict[str, bool] = {}
    kept = []
    for d in deposits:
        hit = internal.get(d.txid)
        if hit is None:
            hit = internal[d.txid] = any(
                s.address in members for s in ledger.tx(d.txid).inputs
            )
        if not hit:
            kept.append(d)
    return kept


def _require(ranges) -> None:
    if not ranges:
        raise EstimaError("value/time filtering needs at least one range")


def filter_tf(deposits: Iterable[Deposit], ranges: FilterRanges) -> list[Deposit]:
    """Keep deposits whose UTC day falls in some closed time interval."""
    _require(ranges)
    return [d for d in deposits if any(r.contains_day(d.day) for r in ranges)]


def filter_vf(deposits: Iterable[Deposit], ranges: FilterRanges) -> list[Deposit]:
    """Keep deposits whose value lies in a value interval of a range covering their day."""
    _require(ranges)
    return [
        d
        for d in deposits
        if any(r.contains_day(d.day) and r.contains_value(d.value) for r in ranges)
    ]


# --- reports --------------------------------------------------------------

REPORT_COLUMNS = (
    "methodology",
    "group",
    "height",
    "seeds",
    "ow",
    "clusters",
    "addresses",
    "deposits",
    "btc",
    "usd",
)
DEPOSIT_COLUMNS = ("txid", "recipient", "height", "date", "satoshis", "btc", "usd")


@dataclass(frozen=True)
class EstimationReport:
    methodology: str
    height: int
    seed_count: int
    ow_count: int
    cluster_count: int | None
    address_count: int
    deposits: tuple[Deposit, ...]
    satoshis: int
    usd_cents: int | None
    deposit_cents: tuple[int, ...] | None = None
    group: str = UNLABELED
    warnings: tuple[str, ...] = ()

    @property
    def deposit_count(self) -> int:
        return len(self.deposits)

    @property
    def btc(self) -> str:
        return format_btc(self.satoshis)

    @property
    def usd(self) -> str:
        return "" if self.usd_cents is None else format_usd(self.usd_cents)

    def table_row(self) -> tuple[int, int, str, str]:
        """The (Addr., Deposits, BTC, USD) columns of a methodology comparison table."""
        return (self.address_count, self.deposit_count, self.btc, self.usd)

    def row(self) -> dict:
        return {
            "methodology": self.methodology,
            "group": self.group,
            "height": self.height,
            "seeds": self.seed_count,
            "ow": self.ow_count,
            "clusters": "" if self.cluster_count is None else self.cluster_count,
            "addresses": self.address_count,
            "deposits": self.deposit_count,
            "btc": self.btc,
            "usd": self.usd,
        }

    def deposit_rows(self) -> list[dict]:
        cents = self.deposit_cents or (None,) * len(self.deposits)
        return [
            {
                "txid": d.txid,
                "recipient": d.recipient,
                "height": d.height,
                "date": d.day.isoformat(),
                "satoshis": d.value,
                "btc": format_btc(d.value),
                "usd": "" if c is None else format_usd(c),
            }
            for d, c in zip(self.deposits, cents)
        ]

    def to_json(self) -> dict:
        out = self.row()
        out["warnings"] = list(self.warnings)
        out["deposit_rows"] = self.deposit_rows()
        return out


def sort_reports(reports: Iterable[EstimationReport]) -> list[EstimationReport]:
    """Order by methodology name, then group label, with each methodology's total row last."""
    return sorted(reports, key=lambda r: (r.methodology, r.group == ALL_GROUPS, r.group))


def reports_csv(reports: Iterable[EstimationReport]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=REPORT_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in reports:
        w.writerow(r.row())
    return buf.getvalue()


def deposits_csv(report: EstimationReport) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=DEPOSIT_COLUMNS, lineterminator="\n")
    w.writeheader()
    w.writerows(report.deposit_rows())
    return buf.getvalue()


def reports_json(reports: Iterable[EstimationReport]) -> str:
    return json.dumps([r.to_json() for r in reports], indent=2, sort_keys=True) + "\n"


# --- pipeline -------------------------------------------------------------


def estimate(
    seeds,
    spec: MethodologySpec | str,
    ledger: Ledger,
    height: int,
    ranges: FilterRanges | None = None,
    tags: TagTable | None = None,
    rates: RateTable | None = None,
    fixed_day: date | None = None,
    fallback: str = STRICT,
    ow_policy: OwPolicy = OwPolicy(),
    clusters: ClusterCache | None = None,
    group: str = UNLABELED,
) -> EstimationReport:
    """Run one methodology. ``rates`` may be None to skip USD conversion."""
    if isinstance(spec, str):
        spec = parse_methodology(spec)
    if ("VF" in spec.filters or "TF" in spec.filters) and not ranges:
        raise EstimaError(f"{spec} needs value/time ranges")
    if clusters is None:
        clusters = ClusterCache(ledger, height)
    elif clusters.ledger is not ledger or clusters.height != height:
        raise EstimaError("cluster cache was built for a different ledger or height")
    index = clusters.get(spec.clustering) if spec.clustering else None
    expanded = expand(seeds, spec, ledger, height, tags, ow_policy, index)
    if not expanded.addresses.issuperset(expanded.seeds):
        raise InvariantError(f"{spec}: expanded set lost a seed")
    deposits = collect(expanded, ledger, height)
    if "DC" in spec.filters:
        deposits = filter_dc(deposits, expanded, ledger)
    if "TF" in spec.filters:
        deposits = filter_tf(deposits, ranges)
    if "VF" in spec.filters:
        deposits = filter_vf(deposits, ranges)
    total = sum(d.value for d in deposits)
    usd = per = None
    if rates is not None:
        usd, per = convert(deposits, rates, fixed_day, fallback)
    return EstimationReport(
        methodology=spec.canonical_name,
        height=height,
        seed_count=len(expanded.seeds),
        ow_count=len(expanded.ow_seeds),
        cluster_count=len(expanded.cluster_ids) if spec.clustering else None,
        address_count=len(expanded.addresses),
        deposits=tuple(deposits),
        satoshis=total,
        usd_cents=usd,
        deposit_cents=per,
        group=group,
        warnings=expanded.warnings,
    )


ALL_GROUPS = "All groups"


def sum_reports(reports: Sequence[EstimationReport], group: str = ALL_GROUPS) -> EstimationReport:
    """Aggregate per-group reports of one methodology into a total row."""
    if not reports:
        raise EstimaError("nothing to sum")
    names = {r.methodology for r in reports}
    if len(names) != 1:
        raise EstimaError("cannot sum reports of different methodologies")
    usd = None if any(r.usd_cents is None for r in reports) else sum(r.usd_cents for r in reports)
    clusters = [r.cluster_count for r in reports]
    return EstimationReport(
        methodology=reports[0].methodology,
        height=reports[0].height,
        seed_count=sum(r.seed_count for r in reports),
        ow_count=sum(r.ow_count for r in reports),
        cluster_count=None if None in clusters else sum(clusters),
        address_count=sum(r.address_count for r in reports),
        deposits=tuple(d for r in reports for d in r.deposits),
        satoshis=sum(r.satoshis for r in reports),
        usd_cents=usd,
        deposit_cents=None if usd is None else tuple(c for r in reports for c in r.deposit_cents),
        group=group,
        warnings=tuple(w for r in reports for w in r.warnings),
    )


def estimate_groups(seeds, spec, ledger: Ledger, height: int, **kwargs) -> list[EstimationReport]:
    """One report per group label plus the ``All groups`` total."""
    per_group = [
        estimate(sub, spec, ledger, height, group=label, **kwargs)
        for label, sub in as_seedset(seeds).groups().items()
    ]
    return per_group + [sum_reports(per_group)]


def sweep(
    seeds,
    ledger: Ledger,
    height: int,
    methodologies: Sequence[str] = SELECTED_METHODOLOGIES,
    group_by: bool = False,
    workers: int = 1,
    **kwargs,
) -> list[EstimationReport]:
    """Run several methodologies over shared clusters; rows sorted by (methodology, group)."""
    specs = [parse_methodology(m) for m in methodologies]
    cache = kwargs.pop("clusters", None) or ClusterCache(ledger, height)
    # build partitions up front so worker threads only read them
    for kind in OrderedDict.fromkeys(s.clustering for s in specs if s.clustering):
        cache.get(kind)

    def run(spec):
        if group_by:
            return estimate_groups(seeds, spec, ledger, height, clusters=cache, **kwargs)
        return [estimate(seeds, spec, ledger, height, clusters=cache, **kwargs)]

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, specs))
    else:
        results = [run(s) for s in specs]
    return sort_reports(r for rs in results for r in rs)
