from datetime import date, datetime
from itertools import permutations

import pytest
from hypothesis import given, settings, strategies as st

from estima.deadbolt import DEADBOLT_RANGES
from estima.errors import EstimaError
from estima.estimator import (
    ALL_GROUPS,
    ClusterCache,
    FilterRange,
    SeedSet,
    collect,
    deposits_csv,
    estimate,
    estimate_groups,
    expand,
    filter_dc,
    filter_tf,
    filter_vf,
    load_ranges,
    load_seeds,
    reports_csv,
    sweep,
)
from estima.ledger import Deposit, Ledger
from estima.methodology import SELECTED_METHODOLOGIES, parse_methodology
from estima.rates import RateTable
from estima.synth import CampaignSpec, gen_campaign, gen_random_ledger
from estima.tags import TagTable

from conftest import UTC, mk_tx

DD = parse_methodology("DD")
MI = parse_methodology("DD+MI")


def dep(value, day):
    return Deposit("t", "S", value, datetime(day.year, day.month, day.day, tzinfo=UTC), 1)


def test_dd_single_seed_usd():
    ledger = Ledger([mk_tx("t", 1, [("V", 100_000_000)], [("S", 100_000_000)])])
    rates = RateTable({ledger.tx("t").day: 10_000})
    r = estimate(["S"], "DD", ledger, 1, rates=rates)
    assert (r.btc, r.usd) == ("1.00000000", "100.00")


def test_dd_expanded_is_seeds(fig1a):
    ledger, truth = fig1a
    ex = expand(truth.seeds, DD, ledger, ledger.max_height)
    assert ex.addresses == {"S1", "S2"}


def test_seed_without_deposits_is_not_a_seed(fig1a):
    ledger, _ = fig1a
    r = estimate(["S1", "never-paid"], "DD+MI", ledger, ledger.max_height)
    assert r.seed_count == 1


def test_fig1a_counts(fig1a):
    ledger, truth = fig1a
    h = ledger.max_height
    assert estimate(truth.seeds, "DD", ledger, h).deposit_count == 2
    r = estimate(truth.seeds, "DD+MI", ledger, h)
    assert r.deposit_count == 4 and r.satoshis == truth.revenue
    assert estimate(truth.seeds, "DD+MI-DC", ledger, h).deposit_count == 4


def test_collect_one_row_per_recipient():
    ledger = Ledger([
        mk_tx("t1", 1, [("V", 10)], [("A", 3), ("B", 3)]),
        mk_tx("t2", 2, [("W", 10)], [("A", 3), ("A", 4)]),
    ])
    ex = expand(["A", "B"], DD, ledger, 2)
    rows = collect(ex, ledger, 2)
    assert [(d.txid, d.recipient, d.value) for d in rows] == [("t1", "A", 3), ("t1", "B", 3), ("t2", "A", 7)]


def test_dc_rules():
    ledger = Ledger([
        mk_tx("ext", 1, [("V", 100)], [("A", 90)]),
        mk_tx("ab", 2, [("A", 90)], [("B", 80)]),
        mk_tx("self", 3, [("B", 80)], [("B", 30), ("Z", 40)]),
    ])
    ex = expand(["A", "B"], DD, ledger, 3)
    kept = filter_dc(collect(ex, ledger, 3), ex, ledger)
    assert [d.txid for d in kept] == ["ext"]


def test_tf_boundaries():
    r = [FilterRange(date(2016, 1, 14), date(2017, 6, 2), ())]
    assert filter_tf([dep(1, date(2016, 6, 1))], r)
    assert filter_tf([dep(1, date(2017, 6, 2))], r)
    assert not filter_tf([dep(1, date(2017, 6, 3))], r)


def test_vf_intervals():
    assert filter_vf([dep(2_950_000, date(2022, 3, 1))], DEADBOLT_RANGES)
    assert not filter_vf([dep(4_000_000, date(2022, 3, 1))], DEADBOLT_RANGES)
    assert filter_vf([dep(3_100_000, date(2022, 3, 1))], DEADBOLT_RANGES)
    # right value, day outside every range
    assert not filter_vf([dep(3_000_000, date(2021, 12, 31))], DEADBOLT_RANGES)


def test_filters_need_ranges(fig1a):
    ledger, truth = fig1a
    with pytest.raises(EstimaError, match="ranges"):
        estimate(truth.seeds, "DD-VF", ledger, ledger.max_height)
    with pytest.raises(EstimaError):
        filter_tf([], [])


def test_load_ranges_exact_decimals(tmp_path):
    p = tmp_path / "r.json"
    p.write_text('[{"from":"2022-01-01","to":"2023-04-12","values_btc":[[0.029,0.031],[0.049,0.051]]}]')
    assert load_ranges(p) == list(DEADBOLT_RANGES)
    p.write_text('[{"from":"2022-01-02","to":"2022-01-01","values_btc":[]}]')
    with pytest.raises(EstimaError, match="after"):
        load_ranges(p)
    p.write_text('[{"from":"2022-01-01","to":"2022-01-02","values_btc":[[0.000000001, 1]]}]')
    with pytest.raises(EstimaError, match="8 decimals"):
        load_ranges(p)


def test_load_seeds(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("address,group\nS1,locky\nS2\nS3,cerber\n")
    seeds = load_seeds(p)
    assert seeds.addresses == ["S1", "S2", "S3"]
    assert list(seeds.groups()) == ["", "cerber", "locky"]
    p.write_text("S1\nS1\n")
    with pytest.raises(EstimaError, match="duplicate"):
        load_seeds(p)


def test_ow_keeps_only_the_seed():
    spec = CampaignSpec(victims=6, service_cluster_size=1500, service_deposits=3000, seed_sample_size=3, rng_seed=2)
    ledger, truth = gen_campaign(spec)
    h = ledger.max_height
    tags = TagTable(truth.tags)
    wallet = truth.extra["online_wallet"]
    ex = expand(truth.seeds, parse_methodology("DD-OW+MI"), ledger, h, tags)
    assert wallet in ex.addresses and ex.ow_seeds == {wallet}
    assert not any(a.startswith("E") and a != wallet for a in ex.addresses)
    r = estimate(truth.seeds, "DD-OW+MI", ledger, h, tags=tags)
    assert r.satoshis == truth.revenue_of(truth.seeds)
    assert r.ow_count == 1


def test_group_reports_sum_to_total(fig1a):
    ledger, _ = fig1a
    seeds = SeedSet([("S1", "a"), ("S2", "b")])
    reports = estimate_groups(seeds, "DD", ledger, ledger.max_height)
    assert [r.group for r in reports] == ["a", "b", ALL_GROUPS]
    assert reports[-1].satoshis == reports[0].satoshis + reports[1].satoshis


def test_sweep_rows_sorted_and_complete(fig1a):
    ledger, truth = fig1a
    ranges = [FilterRange(date(2022, 1, 1), date(2022, 12, 31), ((2_900_000, 3_100_000),))]
    reports = sweep(truth.seeds, ledger, ledger.max_height, ranges=ranges)
    assert len(reports) == 15
    assert sorted(r.methodology for r in reports) == [r.methodology for r in reports]
    assert {r.methodology for r in reports} == set(SELECTED_METHODOLOGIES)
    threaded = sweep(truth.seeds, ledger, ledger.max_height, ranges=ranges, workers=4)
    assert reports_csv(threaded) == reports_csv(reports)


def test_cluster_cache_must_match(fig1a, fig1b):
    a, ta = fig1a
    b, _ = fig1b
    with pytest.raises(EstimaError):
        estimate(ta.seeds, "DD+MI", a, a.max_height, clusters=ClusterCache(b, b.max_height))


def test_deposits_csv_columns(fig1a):
    ledger, truth = fig1a
    r = estimate(truth.seeds, "DD", ledger, ledger.max_height)
    lines = deposits_csv(r).splitlines()
    assert lines[0] == "txid,recipient,height,date,satoshis,btc,usd"
    assert lines[1].endswith(",2022-01-25,3000000,0.03000000,")


ALL_FILTERS = ("DC", "TF", "VF")


def _random_ranges(rng_seed, ledger):
    days = sorted({t.day for t in ledger})
    lo, hi = days[0], days[-1]
    mid = lo + (hi - lo) / 2
    v = rng_seed % 7
    return [
        FilterRange(lo, mid, ((0, 300_000 + v * 50_000),)),
        FilterRange(mid, hi, ((100_000, 900_000),)),
    ]


def _apply(order, deposits, expanded, ledger, ranges):
    for f in order:
        if f == "DC":
            deposits = filter_dc(deposits, expanded, ledger)
        elif f == "TF":
            deposits = filter_tf(deposits, ranges)
        else:
            deposits = filter_vf(deposits, ranges)
    return deposits


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32), st.sampled_from(["DD", "DD+MI", "DD+MI+CA"]))
def test_filters_monotone_and_commute(seed, base):
    ledger = gen_random_ledger(seed, n_txs=80, n_addresses=30)
    h = ledger.max_height
    seeds = ledger.addresses()[:: 5]
    ranges = _random_ranges(seed, ledger)
    spec = parse_methodology(base)
    ex = expand(seeds, spec, ledger, h)
    deps = collect(ex, ledger, h)
    results = {frozenset(_apply(o, deps, ex, ledger, ranges)) for o in permutations(ALL_FILTERS)}
    assert len(results) == 1
    cache = ClusterCache(ledger, h)
    plain = estimate(seeds, base, ledger, h, ranges=ranges, clusters=cache)
    for f in ALL_FILTERS:
        r = estimate(seeds, f"{base}-{f}", ledger, h, ranges=ranges, clusters=cache)
        assert r.satoshis <= plain.satoshis and r.deposit_count <= plain.deposit_count


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32))
def test_expansion_monotone_and_seeds_kept(seed):
    ledger = gen_random_ledger(seed, n_txs=80, n_addresses=30)
    h = ledger.max_height
    seeds = ledger.addresses()[1::4]
    cache = ClusterCache(ledger, h)
    sats = [estimate(seeds, m, ledger, h, clusters=cache).satoshis for m in ("DD", "DD+MI", "DD+MI+CA")]
    assert sats == sorted(sats)
    real = SeedSet(seeds).seeds(ledger, h)
    for m in ("DD", "DD+MI", "DD+MI+CA", "DD-OW+MI"):
        assert set(real) <= expand(seeds, parse_methodology(m), ledger, h).addresses


def test_report_is_deterministic(fig1a):
    ledger, truth = fig1a
    a = reports_csv(sweep(truth.seeds, ledger, ledger.max_height, methodologies=["DD", "DD+MI"]))
    b = reports_csv(sweep(truth.seeds, ledger, ledger.max_height, methodologies=["DD+MI", "DD"]))
    assert a == b
