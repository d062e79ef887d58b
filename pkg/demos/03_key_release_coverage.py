"""Finding unseen victims through key-release transactions.

Every paid victim address receives 5,460 satoshis plus an OP_RETURN key
from one of a few release addresses. Starting from a handful of known
payment addresses, the release addresses lead to all the others.
"""

from estima import conversion_rate, estimate, expand_key_release, scan_signature
from estima.deadbolt import DEADBOLT_RANGES
from estima.synth import CampaignSpec, gen_campaign

spec = CampaignSpec(
    victims=2500, key_release=True, release_address_count=2, seed_sample_size=34,
    topology="hold", omni_decoys=20, near_misses=500, rng_seed=5,
)
ledger, truth = gen_campaign(spec)
h = ledger.max_height

scan = scan_signature(ledger, 0, h)
print(f"full scan: {len(scan.matches)} key releases from {', '.join(scan.release_addresses)}")

found = expand_key_release(truth.seeds, ledger, h)
print(f"from {len(truth.seeds)} seeds: {len(found.release_addresses)} release addresses, "
      f"{len(found.payment_addresses)} payment addresses")

before = estimate(truth.seeds, "DD-VF", ledger, h, ranges=DEADBOLT_RANGES)
after = estimate(sorted(found.payment_addresses), "DD-VF", ledger, h, ranges=DEADBOLT_RANGES)
print(f"ransom payments: {before.deposit_count} ({before.btc} BTC) -> {after.deposit_count} ({after.btc} BTC)")

rate = conversion_rate(found.payment_addresses, ledger, h)
print(f"conversion rate: {rate.paid}/{rate.total} = {float(rate.rate):.1%}, repeat payers {rate.multi_payment}")
