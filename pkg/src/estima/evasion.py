"""Withdrawal shapes that evade multi-input clustering.

A withdrawal is *1-to-n* when it spends from a single distinct input
address, however many slots it uses. Such withdrawals never link the
spending address to anything through MI clustering.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping

from .clustering import ClusterIndex, build_mi_clusters
from .estimator import SeedSet, as_seedset
from .ledger import Ledger, Transaction
from .tags import OwPolicy, TagTable, classify_cluster

ONE_TO_N = "one_to_n"
MULTI_INPUT = "multi_input"


def classify_withdrawal(tx: Transaction) -> str:
    if tx.is_coinbase:
        raise ValueError(f"{tx.txid}: coinbase transactions are not withdrawals")
    first = tx.inputs[0].address
    return ONE_TO_N if all(s.address == first for s in tx.inputs) else MULTI_INPUT


@dataclass(frozen=True)
class WithdrawalStats:
    group: str
    scope: str  # "seeds" | "expanded"
    total: int
    one_to_n: int

    @property
    def proportion(self) -> Fraction | None:
        """None when the scope has no withdrawals at all."""
        return Fraction(self.one_to_n, self.total) if self.total else None


@dataclass(frozen=True)
class EvasionResult:
    stats: tuple[WithdrawalStats, ...]
    cdf: tuple[tuple[Fraction, Fraction], ...]
    no_withdrawals: tuple[str, ...]
    expanded_cdf: tuple[tuple[Fraction, Fraction], ...] = ()

    def fraction_at(self, proportion, scope: str = "seeds") -> Fraction:
        """Share of groups (with withdrawals) whose 1-to-n proportion equals ``proportion``."""
        props = [s.proportion for s in self.stats if s.scope == scope and s.total]
        if not props:
            return Fraction(0)
        return Fraction(sum(1 for p in props if p == proportion), len(props))


def _stats(group: str, scope: str, txs: list[Transaction]) -> WithdrawalStats:
    n = sum(1 for tx in txs if classify_withdrawal(tx) == ONE_TO_N)
    return WithdrawalStats(group, scope, len(txs), n)


def withdrawal_cdf(proportions) -> tuple[tuple[Fraction, Fraction], ...]:
    """Empirical CDF as (proportion, cumulative fraction) steps."""
    props = sorted(proportions)
    if not props:
        return ()
    n = len(props)
    out = []
    for i, p in enumerate(props, 1):
        if i == n or props[i] != p:
            out.append((p, Fraction(i, n)))
    return tuple(out)


def evasion_stats(
    groups: Mapping[str, SeedSet] | SeedSet,
    ledger: Ledger,
    height: int,
    tags: TagTable | None = None,
    ow_policy: OwPolicy = OwPolicy(),
    clusters: ClusterIndex | None = None,
) -> EvasionResult:
    """Per-group 1-to-n withdrawal statistics for seeds and their MI clusters.

    Seeds judged online wallets are removed first. Groups without any seed
    withdrawal are listed in ``no_withdrawals`` and left out of the CDF.
    """
    if not isinstance(groups, Mapping):
        groups = as_seedset(groups).groups()
    if clusters is None:
        clusters = build_mi_clusters(ledger, height)
    verdicts: dict[int, bool] = {}
    stats = []
    silent = []
    for label in sorted(groups):
        kept = []
        for s in as_seedset(groups[label]).seeds(ledger, height):
            cid = clusters.cluster_of(s).id
            if cid not in verdicts:
                verdicts[cid] = classify_cluster(
                    cid, clusters, tags, ow_policy.policy, ow_policy.threshold
                ).is_service
            if not verdicts[cid]:
                kept.append(s)
        seed_stats = _stats(label, "seeds", ledger.withdrawals_from(kept, height))
        expanded: set[str] = set()
        for cid in dict.fromkeys(clusters.cluster_of(s).id for s in kept):
            expanded.update(clusters.members(cid))
        stats.append(seed_stats)
        stats.append(_stats(label, "expanded", ledger.withdrawals_from(expanded, height)))
        if seed_stats.total == 0:
            silent.append(label)
    cdf = withdrawal_cdf(s.proportion for s in stats if s.scope == "seeds" and s.total)
    ecdf = withdrawal_cdf(s.proportion for s in stats if s.scope == "expanded" and s.total)
    return EvasionResult(tuple(stats), cdf, tuple(silent), ecdf)


def _dec(x: Fraction | None) -> str:
    return "" if x is None else f"{float(x):.6f}"


def stats_csv(result: EvasionResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["group", "scope", "withdrawals", "one_to_n", "proportion"])
    for s in result.stats:
        w.writerow([s.group, s.scope, s.total, s.one_to_n, _dec(s.proportion) or "no-withdrawals"])
    return buf.getvalue()


def cdf_csv(cdf) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["proportion", "cumulative_fraction"])
    for p, c in cdf:
        w.writerow([_dec(p), _dec(c)])
    return buf.getvalue()
