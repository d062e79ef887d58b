"""Share of 1-to-n withdrawals per campaign group, and its CDF."""

from estima import evasion_stats
from estima.evasion import cdf_csv, stats_csv
from estima.synth import gen_evasion_fixture

ledger, seeds = gen_evasion_fixture(n_groups=10, one_to_n_groups=4, silent_groups=1)
result = evasion_stats(seeds, ledger, ledger.max_height)
print(stats_csv(result))
print(cdf_csv(result.cdf))
print(f"groups using only 1-to-n withdrawals: {float(result.fraction_at(1)):.0%}")
print(f"groups that never withdrew: {', '.join(result.no_withdrawals)}")
