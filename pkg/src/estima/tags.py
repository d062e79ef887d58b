"""Tag database of known service addresses and the online-wallet (OW) policy.

A seed whose cluster is judged a service is treated as an online wallet:
only its own deposits count. Without a trained exchange classifier, large
untagged clusters can be flagged through a size threshold instead.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple

from .clustering import ClusterIndex
from .errors import EstimaError

CATEGORIES = ("exchange", "mixer", "gambling", "service", "other")
SERVICE_CATEGORIES = frozenset({"exchange", "mixer", "gambling", "service"})

TAG_ONLY = "tag_only"
TAG_PLUS_THRESHOLD = "tag_plus_threshold"
DEFAULT_THRESHOLD = 1000


class TagRecord(NamedTuple):
    address: str
    owner: str
    category: str


class TagTable:
    def __init__(self, records: Iterable[TagRecord] = ()):
        self._by_addr: dict[str, TagRecord] = {}
        for rec in records:
            if rec.category not in CATEGORIES:
                raise EstimaError(f"unknown tag category {rec.category!r} for {rec.address}")
            if rec.address in self._by_addr:
                raise EstimaError(f"duplicate tag for address {rec.address}")
            self._by_addr[rec.address] = rec

    def lookup(self, address: str) -> TagRecord | None:
        return self._by_addr.get(address)

    def __contains__(self, address: str) -> bool:
        return address in self._by_addr

    def __len__(self) -> int:
        return len(self._by_addr)

    def __iter__(self) -> Iterator[TagRecord]:
        return iter(self._by_addr.values())

    def with_records(self, records: Iterable[TagRecord]) -> "TagTable":
        return TagTable(list(self) + list(records))


def load_tags(path) -> TagTable:
    """Read a ``address,owner,category`` CSV (header required)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return TagTable()
        if [h.strip() for h in header] != ["address", "owner", "category"]:
            raise EstimaError(f"{path}: expected header address,owner,category")
        records = []
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            if len(row) != 3:
                raise EstimaError(f"{path}: line {lineno}: expected 3 columns")
            records.append(TagRecord(*(c.strip() for c in row)))
    return TagTable(records)


@dataclass(frozen=True)
class OwPolicy:
    policy: str = TAG_PLUS_THRESHOLD
    threshold: int = DEFAULT_THRESHOLD

    def __post_init__(self):
        if self.policy not in (TAG_ONLY, TAG_PLUS_THRESHOLD):
            raise EstimaError(f"unknown OW policy {self.policy!r}")
        if self.threshold < 1:
            raise EstimaError("OW threshold must be >= 1")


@dataclass(frozen=True)
class ServiceVerdict:
    cluster_id: int
    is_service: bool
    reason: str = "none"  # tagged | size_threshold | none
    matched_tags: tuple[TagRecord, ...] = field(default=())


def classify_cluster(
    cluster_id: int,
    index: ClusterIndex,
    tags: TagTable | None,
    policy: str = TAG_PLUS_THRESHOLD,
    threshold: int = DEFAULT_THRESHOLD,
) -> ServiceVerdict:
    if threshold < 1:
        raise EstimaError("threshold must be >= 1")
    size = index.size(cluster_id)
    matched: list[TagRecord] = []
    if tags is not None and len(tags):
        # walk whichever side is smaller
        if len(tags) < size:
            matched = [r for r in tags if index.cluster_of(r.address).id == cluster_id]
        else:
            matched = [r for a in index.members(cluster_id) if (r := tags.lookup(a)) is not None]
    matched.sort(key=lambda r: r.address)
    if any(r.category in SERVICE_CATEGORIES for r in matched):
        return ServiceVerdict(cluster_id, True, "tagged", tuple(matched))
    if policy == TAG_PLUS_THRESHOLD and size >= threshold:
        return ServiceVerdict(cluster_id, True, "size_threshold", tuple(matched))
    return ServiceVerdict(cluster_id, False, "none", tuple(matched))
