"""Multi-input (MI) and change-address (CA) address clustering.

Clusters are held in a union-find over the ledger's integer address ids.
Because ids follow first-appearance order, the smallest id in a cluster is
used as its public cluster id, which makes ids reproducible across runs.
"""

from __future__ import annotations

from collections import Counter
from typing import Iterator, NamedTuple

from .ledger import Ledger, Transaction


class UnionFind:
    """Disjoint sets over 0..n-1 with path halving and union by size."""

    __slots__ = ("parent", "size")

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, x: int) -> int:
        parent = self.parent
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(self, x: int, y: int) -> int:
        rx, ry = self.find(x), self.find(y)
        if rx == ry:
            return rx
        if self.size[rx] < self.size[ry]:
            rx, ry = ry, rx
        self.parent[ry] = rx
        self.size[rx] += self.size[ry]
        return rx

    def copy(self) -> "UnionFind":
        other = UnionFind.__new__(UnionFind)
        other.parent = self.parent[:]
        other.size = self.size[:]
        return other


class CoinJoinVerdict(NamedTuple):
    txid: str
    is_coinjoin: bool
    matched_output_value: int | None = None
    participant_count: int | None = None


def detect_coinjoin(tx: Transaction) -> CoinJoinVerdict:
    """Equal-output CoinJoin heuristic.

    Flags the tx when its most frequent output value appears k >= 2 times,
    there are at least k distinct input addresses and at least k + 1
    outputs. OP_RETURN outputs are ignored. Among equally frequent values
    the largest one is reported.
    """
    values = [s.value for s in tx.outputs if s.address is not None]
    if len(values) < 3 or tx.is_coinbase:
        return CoinJoinVerdict(tx.txid, False)
    counts = Counter(values)
    k = max(counts.values())
    if k < 2 or len(values) < k + 1:
        return CoinJoinVerdict(tx.txid, False)
    if len(tx.input_addresses) < k:
        return CoinJoinVerdict(tx.txid, False)
    v = max(val for val, c in counts.items() if c == k)
    return CoinJoinVerdict(tx.txid, True, v, k)


class ClusterRef(NamedTuple):
    id: int
    size: int


class ClusterIndex:
    """Partition of every address seen at or below ``height``.

    Built by :func:`build_mi_clusters` / :func:`build_mica_clusters`.
    Addresses the partition has never seen get fresh singleton ids above
    the range of real cluster ids.
    """

    def __init__(self, ledger: Ledger, height: int, kind: str, uf: UnionFind):
        self.ledger = ledger
        self.height = height
        self.kind = kind
        n = len(uf.parent)
        find = uf.find
        root_label: dict[int, int] = {}
        labels = [0] * n
        # ids ascend in first-appearance order, so the first member seen per root is the smallest
        for aid in range(n):
            r = find(aid)
            lab = root_label.get(r)
            if lab is None:
                lab = root_label[r] = aid
            labels[aid] = lab
        self._labels = labels
        self._sizes = {lab: uf.size[r] for r, lab in root_label.items()}
        self._members: dict[int, list[str]] | None = None
        self._unseen: dict[str, int] = {}

    def __len__(self) -> int:
        return len(self._sizes)

    @property
    def address_count(self) -> int:
        return len(self._labels)

    def _aid(self, address: str) -> int | None:
        aid = self.ledger.address_id(address)
        if aid is None or aid >= len(self._labels):
            return None
        return aid

    def cluster_of(self, address: str) -> ClusterRef:
        aid = self._aid(address)
        if aid is None:
            fresh = self._unseen.get(address)
            if fresh is None:
                fresh = self._unseen.setdefault(address, len(self._labels) + len(self._unseen))
            return ClusterRef(fresh, 1)
        lab = self._labels[aid]
        return ClusterRef(lab, self._sizes[lab])

    def same_cluster(self, a: str, b: str) -> bool:
        return self.cluster_of(a).id == self.cluster_of(b).id

    def size(self, cluster_id: int) -> int:
        return self._sizes.get(cluster_id, 1)

    def members(self, cluster_id: int) -> list[str]:
        """Member addresses in first-appearance order."""
        if cluster_id not in self._sizes:
            for addr, cid in self._unseen.items():
                if cid == cluster_id:
                    return [addr]
            return []
        if self._sizes[cluster_id] == 1:
            return [self.ledger.address_at(cluster_id)]
        if self._members is None:
            groups: dict[int, list[str]] = {}
            addr_at = self.ledger.address_at
            for aid, lab in enumerate(self._labels):
                if self._sizes[lab] > 1:
                    groups.setdefault(lab, []).append(addr_at(aid))
            self._members = groups
        return self._members[cluster_id]

    def cluster_ids(self) -> list[int]:
        return sorted(self._sizes)

    def as_sets(self) -> set[frozenset[str]]:
        return {frozenset(self.members(cid)) for cid in self._sizes}

    def rows(self) -> Iterator[tuple[str, int, int]]:
        """(address, cluster_id, cluster_size) in first-appearance order."""
        addr_at = self.ledger.address_at
        for aid, lab in enumerate(self._labels):
            yield addr_at(aid), lab, self._sizes[lab]


def cluster_of(index: ClusterIndex, addr: str) -> ClusterRef:
    return index.cluster_of(addr)


def _mi_union_find(ledger: Ledger, height: int, exclude_coinjoin: bool) -> UnionFind:
    uf = UnionFind(ledger.address_count(height))
    ids = ledger.address_id
    union = uf.union
    for tx in ledger.transactions(height):
        ins = tx.inputs
        if len(ins) < 2:
            continue
        first = ins[0].address
        if all(s.address == first for s in ins):
            continue
        if exclude_coinjoin and detect_coinjoin(tx).is_coinjoin:
            continue
        root = ids(first)
        for s in ins:
            if s.address != first:
                root = union(root, ids(s.address))
    return uf


def build_mi_clusters(ledger: Ledger, height: int, exclude_coinjoin: bool = True) -> ClusterIndex:
    """Transitive closure of 'inputs of one transaction share an owner'."""
    return ClusterIndex(ledger, height, "MI", _mi_union_find(ledger, height, exclude_coinjoin))


def _is_fresh(ledger: Ledger, address: str, pos: int, tx: Transaction) -> bool:
    return ledger.first_position(address) == pos and all(
        s.address != address for s in tx.inputs
    )


def identify_change_output(tx: Transaction, ledger: Ledger, height: int) -> str | None:
    """Two-output freshness heuristic: the unique never-seen-before output is change."""
    if tx.is_coinbase or tx.height > height:
        return None
    outs = [s.address for s in tx.outputs if s.address is not None]
    if len(outs) != 2 or outs[0] == outs[1]:
        return None
    pos = ledger.position(tx.txid)
    fresh = [a for a in outs if _is_fresh(ledger, a, pos, tx)]
    return fresh[0] if len(fresh) == 1 else None


def build_mica_clusters(ledger: Ledger, height: int, exclude_coinjoin: bool = True) -> ClusterIndex:
    """MI partition further merged with change outputs, processed in ledger order."""
    uf = _mi_union_find(ledger, height, exclude_coinjoin)
    ids = ledger.address_id
    for tx in ledger.transactions(height):
        if tx.is_coinbase or len(tx.outputs) < 2:
            continue
        change = identify_change_output(tx, ledger, height)
        if change is None:
            continue
        if exclude_coinjoin and detect_coinjoin(tx).is_coinjoin:
            continue
        uf.union(ids(tx.inputs[0].address), ids(change))
    return ClusterIndex(ledger, height, "MI+CA", uf)
