"""A seed that is really an exchange deposit address.

One payment address sits inside a busy exchange. Expanding it through
multi-input clustering pulls in the whole exchange and its customers'
deposits; the OW filter keeps only the seed's own deposits.
"""

from estima import ClusterCache, TagTable, estimate
from estima.synth import CampaignSpec, gen_campaign

spec = CampaignSpec(
    victims=20, topology="aggregated_one_to_n", service_cluster_size=1500,
    service_deposits=10_000, seed_sample_size=5, rng_seed=4,
)
ledger, truth = gen_campaign(spec)
h = ledger.max_height
tags = TagTable(truth.tags)
cache = ClusterCache(ledger, h)

print(f"{len(ledger)} transactions, {len(truth.seeds)} seeds, one at the exchange ({truth.extra['online_wallet']})")
print(f"ground truth for the seeds: {truth.revenue_of(truth.seeds) / 1e8:.8f} BTC")
for method in ("DD", "DD+MI", "DD-OW+MI", "DD-OW+MI-DC"):
    r = estimate(truth.seeds, method, ledger, h, tags=tags, clusters=cache)
    print(f"{method:12s} addresses={r.address_count:5d} deposits={r.deposit_count:6d} btc={r.btc:>16s} ow={r.ow_count}")
