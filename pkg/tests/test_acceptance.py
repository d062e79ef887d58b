"""Acceptance criteria 1-14, one test each.

Each test records a one-line verdict; the terminal summary (see
conftest.py) prints them all at the end of the run. Run this file alone
with ``pytest tests/test_acceptance.py``.
"""

import json
import random
import time
from datetime import date, datetime, timedelta, timezone
from fractions import Fraction

import pytest

from estima.clustering import build_mi_clusters, cluster_of
from estima.cli import main
from estima.deadbolt import DEADBOLT_RANGES, conversion_rate, expand_key_release, scan_signature
from estima.errors import MethodologyError
from estima.estimator import (
    ClusterCache,
    FilterRange,
    collect,
    deposits_csv,
    estimate,
    expand,
    filter_dc,
    filter_tf,
    filter_vf,
)
from estima.evasion import evasion_stats
from estima.ledger import Deposit, dump_ledger, load_ledger
from estima.methodology import SELECTED_METHODOLOGIES, parse_methodology
from estima.rates import RateTable, convert, format_usd, parse_usd_cents, rates_csv
from estima.synth import (
    AGGREGATED_ONE_TO_N,
    DIRECT_MULTI_INPUT,
    CampaignSpec,
    campaign_transactions,
    gen_ca_collapse,
    gen_campaign,
    gen_conversion_fixture,
    gen_evasion_fixture,
    gen_fig1a,
    gen_fig1b,
    gen_random_ledger,
    oracle_mi,
    oracle_revenue,
    oracle_scan,
    synthetic_rates,
)
from estima.tags import TagTable

RESULTS: dict[int, str] = {}


def record(n: int, ok: bool, detail: str) -> None:
    RESULTS[n] = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    assert ok, RESULTS[n]


def test_01_methodology_grammar():
    t0 = time.perf_counter()
    round_trip = all(parse_methodology(m).canonical_name == m for m in SELECTED_METHODOLOGIES)
    rejected = 0
    for bad in ("DD+CA", "DD+MI+MI", "DD-VF-VF", "+MI-DC", "MI"):
        try:
            parse_methodology(bad)
        except MethodologyError:
            rejected += 1
    elapsed = time.perf_counter() - t0
    record(1, round_trip and len(SELECTED_METHODOLOGIES) == 15 and rejected == 5 and elapsed < 1,
           f"15/15 round-trip={round_trip}, invalid rejected {rejected}/5, {elapsed * 1000:.1f} ms")


def test_02_clustering_oracle():
    t0 = time.perf_counter()
    equal = 0
    for seed in range(100):
        ledger = gen_random_ledger(1000 + seed, n_txs=200, n_addresses=120)
        h = ledger.max_height
        equal += build_mi_clusters(ledger, h).as_sets() == oracle_mi(ledger, h)
    elapsed = time.perf_counter() - t0
    record(2, equal == 100 and elapsed < 10, f"{equal}/100 ledgers equal to oracle, {elapsed:.2f} s")


def test_03_fig1_replication():
    a, ta = gen_fig1a()
    ha = a.max_height
    ra = estimate(ta.seeds, "DD+MI", a, ha)
    exa = expand(ta.seeds, parse_methodology("DD+MI"), a, ha)
    ok_a = ra.deposit_count == 4 and {"S1", "S2", "P1", "P2"} <= exa.addresses
    b, tb = gen_fig1b()
    hb = b.max_height
    rb = estimate(tb.seeds, "DD+MI", b, hb)
    idx = build_mi_clusters(b, hb)
    singletons = all(cluster_of(idx, s).size == 1 for s in tb.seeds)
    exb = expand(list(tb.seeds) + ["A1", "A2"], parse_methodology("DD+MI"), b, hb)
    ok_b = rb.deposit_count == 2 and singletons and {"A3", "A4"} <= exb.addresses
    record(3, ok_a and ok_b, f"1a DD+MI deposits={ra.deposit_count}; 1b DD+MI deposits={rb.deposit_count}, "
                             f"seeds singleton={singletons}, A3/A4 found={ {'A3', 'A4'} <= exb.addresses}")


def test_04_ow_overshoot():
    spec = CampaignSpec(victims=20, topology=AGGREGATED_ONE_TO_N, service_cluster_size=1500,
                        service_deposits=10_000, seed_sample_size=5, rng_seed=4)
    ledger, truth = gen_campaign(spec)
    h = ledger.max_height
    tags = TagTable(truth.tags)
    cache = ClusterCache(ledger, h)
    wallet = truth.extra["online_wallet"]
    size = cluster_of(cache.get("MI"), wallet).size
    mi = estimate(truth.seeds, "DD+MI", ledger, h, tags=tags, clusters=cache)
    ow = estimate(truth.seeds, "DD-OW+MI", ledger, h, tags=tags, clusters=cache)
    per_seed = truth.revenue_of(truth.seeds)
    ok = size == 1500 and mi.satoshis >= 100 * ow.satoshis and ow.satoshis == per_seed
    record(4, ok, f"exchange cluster {size} addrs; DD+MI {mi.btc} BTC vs DD-OW+MI {ow.btc} BTC "
                  f"({mi.satoshis / ow.satoshis:.0f}x); truth {per_seed} sat")


def test_05_ca_collapse():
    ledger, truth = gen_ca_collapse()
    h = ledger.max_height
    tags = TagTable(truth.tags)
    dd = estimate(truth.seeds, "DD", ledger, h, tags=tags)
    owca = estimate(truth.seeds, "DD-OW+MI+CA", ledger, h, tags=tags)
    mica = estimate(truth.seeds, "DD+MI+CA", ledger, h, tags=tags)
    same = dd.table_row() == owca.table_row() and deposits_csv(dd) == deposits_csv(owca)
    record(5, same and owca.ow_count == len(truth.seeds),
           f"DD {dd.table_row()} == DD-OW+MI+CA {owca.table_row()} (deposit CSV identical={deposits_csv(dd) == deposits_csv(owca)}); "
           f"unfiltered DD+MI+CA {mica.btc} BTC")


def test_06_dc_conservation():
    exact = 0
    for i in range(50):
        spec = CampaignSpec(
            victims=10 + i, reuse_probability=(i % 5) / 10, ransom_values=(3_000_000, 5_000_000),
            topology=(DIRECT_MULTI_INPUT, AGGREGATED_ONE_TO_N)[i % 2], internal_shuffles=i, rng_seed=600 + i,
        )
        ledger, truth = gen_campaign(spec)
        r = estimate(truth.payment_addresses, "DD-OW+MI-DC", ledger, ledger.max_height)
        exact += r.satoshis == oracle_revenue(truth)
    heavy, truth = gen_campaign(CampaignSpec(victims=200, topology=DIRECT_MULTI_INPUT, internal_shuffles=400, rng_seed=66))
    h = heavy.max_height
    mi = estimate(truth.payment_addresses, "DD+MI", heavy, h)
    dc = estimate(truth.payment_addresses, "DD+MI-DC", heavy, h)
    record(6, exact == 50 and mi.satoshis > dc.satoshis and dc.satoshis == truth.revenue,
           f"{exact}/50 exact; heavy shuffling DD+MI {mi.btc} > DD+MI-DC {dc.btc} BTC "
           f"({100 * (1 - dc.satoshis / mi.satoshis):.1f}% reduction)")


def _ranges_for(ledger, rng):
    days = sorted({t.day for t in ledger})
    span = (days[-1] - days[0]).days
    out = []
    for _ in range(rng.randint(1, 3)):
        a = days[0] + timedelta(days=rng.randint(0, span))
        b = a + timedelta(days=rng.randint(0, span))
        lo = rng.randint(0, 600_000)
        out.append(FilterRange(a, b, ((lo, lo + rng.randint(0, 600_000)),)))
    return out


def test_07_filter_properties():
    from itertools import permutations

    rng = random.Random(7)
    cases = ok = 0
    for case in range(200):
        ledger = gen_random_ledger(7000 + case, n_txs=60, n_addresses=25)
        h = ledger.max_height
        seeds = rng.sample(ledger.addresses(), 6)
        base = rng.choice(["DD", "DD+MI", "DD+MI+CA", "DD-OW+MI"])
        ranges = _ranges_for(ledger, rng)
        cache = ClusterCache(ledger, h)
        spec = parse_methodology(base)
        plain = estimate(seeds, spec, ledger, h, ranges=ranges, clusters=cache)
        monotone = True
        for f in ("DC", "TF", "VF"):
            r = estimate(seeds, f"{base}-{f}", ledger, h, ranges=ranges, clusters=cache)
            monotone &= r.satoshis <= plain.satoshis and r.deposit_count <= plain.deposit_count
        ex = expand(seeds, spec, ledger, h, clusters=cache.get(spec.clustering) if spec.clustering else None)
        deps = collect(ex, ledger, h)
        steps = {"DC": lambda d: filter_dc(d, ex, ledger), "TF": lambda d: filter_tf(d, ranges), "VF": lambda d: filter_vf(d, ranges)}
        survivors = set()
        for order in permutations(steps):
            d = deps
            for f in order:
                d = steps[f](d)
            survivors.add(frozenset(d))
        cases += 1
        ok += monotone and len(survivors) == 1
    record(7, ok == cases == 200, f"{ok}/{cases} randomized cases monotone and order-independent")


def test_08_signature_scan():
    spec = CampaignSpec(victims=2500, key_release=True, release_address_count=3, omni_decoys=50,
                        near_misses=5000, topology="hold", rng_seed=8)
    ledger, truth = gen_campaign(spec)
    lo, hi = 0, ledger.max_height
    res = scan_signature(ledger, lo, hi)
    planted = set(truth.extra["release_txids"])
    found = {m.txid for m in res.matches}
    tp = len(found & planted)
    precision, recall = tp / len(found), tp / len(planted)
    oracle_ok = list(res.matches) == oracle_scan(ledger, lo, hi, max_txs=len(ledger))
    rng = random.Random(8)
    splits = [lo, hi - 1] + [rng.randint(lo, hi - 1) for _ in range(30)]
    additive = all(
        scan_signature(ledger, lo, b).matches + scan_signature(ledger, b + 1, hi).matches == res.matches for b in splits
    )
    ok = len(res.matches) == 2500 and len(res.release_addresses) == 3 and precision == recall == 1.0 and additive and oracle_ok
    record(8, ok, f"{len(res.matches)} matches, {len(res.release_addresses)} release addresses, "
                  f"precision={precision:.3f} recall={recall:.3f}, additivity over {len(splits)} splits={additive}, oracle={oracle_ok}")


def test_09_coverage_amplification():
    spec = CampaignSpec(victims=2500, key_release=True, release_address_count=2, seed_sample_size=34,
                        topology="hold", rng_seed=5)
    ledger, truth = gen_campaign(spec)
    h = ledger.max_height
    # release deposits of 5,460 sat also land on every payment address; VF keeps the ransoms only
    seeds_only = estimate(truth.seeds, "DD-VF", ledger, h, ranges=DEADBOLT_RANGES)
    found = expand_key_release(truth.seeds, ledger, h)
    expanded = estimate(sorted(found.payment_addresses), "DD-VF", ledger, h, ranges=DEADBOLT_RANGES)
    dd_seeds = estimate(truth.seeds, "DD", ledger, h)
    dd_all = estimate(sorted(found.payment_addresses), "DD", ledger, h)
    ratio = dd_all.satoshis / dd_seeds.satoshis
    ok = seeds_only.deposit_count == 34 and expanded.deposit_count == 2500 and ratio >= 35
    record(9, ok, f"payments {seeds_only.deposit_count} -> {expanded.deposit_count}; "
                  f"DD {dd_seeds.btc} -> {dd_all.btc} BTC ({ratio:.1f}x)")


def test_10_conversion_rate():
    ledger, addrs = gen_conversion_fixture(addresses=1000, payers=7, repeat_payers=2, off_range=3)
    rep = conversion_rate(addrs, ledger, ledger.max_height)
    record(10, rep.rate == Fraction(7, 1000) and rep.multi_payment == 2,
           f"rate {float(rep.rate):.3f} ({rep.paid}/{rep.total}), multi-payment {rep.multi_payment}")


def test_11_evasion_cdf():
    ledger, seeds = gen_evasion_fixture(n_groups=10, one_to_n_groups=4)
    res = evasion_stats(seeds, ledger, ledger.max_height)
    share = res.fraction_at(1)
    record(11, share == Fraction(2, 5) and res.cdf[-1][1] == 1, f"{float(share):.0%} of groups at proportion 1.0")


def test_12_usd_conversion():
    day = date(2022, 1, 25)
    noon = datetime(2022, 1, 25, 12, tzinfo=timezone.utc)
    dep = Deposit("t", "S", 3_000_000, noon, 1)
    table = RateTable({day: parse_usd_cents("36666.67")})
    single = format_usd(convert([dep], table).total_cents)
    rng = random.Random(12)
    ok = 0
    for _ in range(200):
        cents = rng.randint(1, 10**8)
        values = [rng.randint(0, 10**10) for _ in range(rng.randint(1, 6))]
        table = RateTable({day: cents})
        deps = [Deposit("t", "S", v, noon, 1) for v in values]
        total, per = convert(deps, table)
        # round(Fraction) rounds half to even
        expected = [round(Fraction(v * cents, 100_000_000)) for v in values]
        joint = convert([Deposit("t", "S", sum(values), noon, 1)], table).total_cents
        ok += per == tuple(expected) and total == sum(expected) and abs(joint - total) <= len(values)
    record(12, single == "1100.00" and ok == 200, f"0.03 BTC at $36,666.67 -> ${single}; {ok}/200 randomized cases exact")


def test_13_end_to_end_determinism(tmp_path, monkeypatch):
    spec = CampaignSpec(victims=60, reuse_probability=0.2, key_release=True, service_cluster_size=40,
                        service_deposits=100, seed_sample_size=12, internal_shuffles=20, rng_seed=13)
    txs, truth = campaign_transactions(spec)
    inputs = tmp_path / "inputs"
    inputs.mkdir()
    dump_ledger(txs, inputs / "ledger.jsonl")
    (inputs / "seeds.csv").write_text("".join(f"{s},g{i % 3}\n" for i, s in enumerate(truth.seeds)))
    (inputs / "tags.csv").write_text("address,owner,category\n" + "".join(f"{t.address},{t.owner},{t.category}\n" for t in truth.tags))
    days = [t.day for t in txs]
    (inputs / "rates.csv").write_text(rates_csv(synthetic_rates(min(days), max(days), 13)))
    (inputs / "ranges.json").write_text('[{"from":"2022-01-01","to":"2023-04-12","values_btc":[[0.029,0.031],[0.049,0.051]]}]')
    argv = ["estimate", "--sweep", "--group-by", "label", "--height", str(max(t.height for t in txs))]
    for name in ("ledger", "seeds", "tags", "rates", "ranges"):
        ext = {"ledger": "jsonl", "ranges": "json"}.get(name, "csv")
        argv += [f"--{name}", str(inputs / f"{name}.{ext}")]
    argv += ["--out", "report.csv", "--json", "report.json", "--deposits", "deposits.csv"]
    outputs = []
    for run in ("a", "b"):
        d = tmp_path / run
        d.mkdir()
        monkeypatch.chdir(d)
        assert main(argv) == 0
        outputs.append({f: (d / f).read_bytes() for f in ("report.csv", "report.json", "deposits.csv", "report.csv.manifest.json")})
    rows = outputs[0]["report.csv"].decode().count("\n") - 1
    record(13, outputs[0] == outputs[1] and rows == 15 * 4, f"{rows} sweep rows; 4 output files byte-identical={outputs[0] == outputs[1]}")


@pytest.mark.slow
def test_14_performance(tmp_path):
    victims = 250_000
    spec = CampaignSpec(victims=victims, topology=AGGREGATED_ONE_TO_N, key_release=True, release_address_count=3,
                        seed_sample_size=1000, window_days=365, rng_seed=14,
                        noise_txs=1_000_000 - 3 - victims * 3 - victims // 4)
    txs, truth = campaign_transactions(spec)
    n = len(txs)
    path = tmp_path / "big.jsonl"
    dump_ledger(txs, path)
    del txs
    t0 = time.perf_counter()
    ledger = load_ledger(path)
    t_load = time.perf_counter() - t0
    h = ledger.max_height
    cache = ClusterCache(ledger, h)
    cache.get("MI")
    t_cluster = time.perf_counter() - t0 - t_load
    report = estimate(truth.seeds, "DD-OW+MI-DC", ledger, h, clusters=cache)
    total = time.perf_counter() - t0
    t1 = time.perf_counter()
    scan = scan_signature(ledger, 0, h)
    t_scan = time.perf_counter() - t1
    ok = n == 1_000_000 and total < 60 and t_scan < 10 and len(scan.matches) == victims and report.seed_count == 1000
    record(14, ok, f"{n} txs: load {t_load:.1f} s + MI {t_cluster:.1f} s + DD-OW+MI-DC = {total:.1f} s (<60); "
                   f"scan {t_scan:.1f} s (<10), {len(scan.matches)} matches")
