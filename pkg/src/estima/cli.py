"""Command-line front end.

Exit status: 0 on success, 1 on bad input or usage, 2 when an internal
invariant breaks. Every command can write a run manifest (``--manifest``)
recording the command line, input digests, height and methodologies so a
run can be reproduced exactly.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
from datetime import date
from pathlib import Path

from . import __version__
from .address import validate_btc_address
from .clustering import build_mi_clusters, build_mica_clusters
from .deadbolt import (
    DEADBOLT_RANGES,
    RELEASE_VALUE,
    conversion_rate,
    expand_key_release,
    scan_signature,
)
from .errors import EstimaError, InvariantError
from .estimator import (
    DEPOSIT_COLUMNS,
    REPORT_COLUMNS,
    ClusterCache,
    load_ranges,
    load_seeds,
    ranges_to_json,
    sweep,
)
from .evasion import cdf_csv, evasion_stats, stats_csv
from .ledger import dump_ledger, load_ledger
from .methodology import SELECTED_METHODOLOGIES, parse_methodology
from .rates import PREVIOUS_DAY, STRICT, load_rates, rates_csv
from .synth import (
    CampaignSpec,
    campaign_transactions,
    gen_ca_collapse,
    gen_fig1a,
    gen_fig1b,
    synthetic_rates,
)
from .tags import TAG_ONLY, TAG_PLUS_THRESHOLD, OwPolicy, load_tags


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _json_digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


class Manifest:
    def __init__(self, argv, command):
        self.data = {
            "tool": "estima",
            "version": __version__,
            "command": command,
            "argv": list(argv),
            "inputs": {},
            "height": None,
            "methodologies": [],
            "ranges_sha256": None,
        }

    def add_input(self, role, path) -> None:
        if path is not None:
            self.data["inputs"][role] = {"path": str(path), "sha256": _digest(path)}

    def dumps(self) -> str:
        return json.dumps(self.data, indent=2, sort_keys=True) + "\n"


def _emit(path, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _write_manifest(args, manifest: Manifest) -> None:
    target = args.manifest
    if target is None and getattr(args, "out", None) not in (None, "-"):
        target = f"{args.out}.manifest.json"
    if target is not None:
        _emit(target, manifest.dumps())


def _workers() -> int:
    raw = os.environ.get("ESTIMA_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise EstimaError(f"ESTIMA_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise EstimaError("ESTIMA_THREADS must be >= 1")
    return min(n, os.cpu_count() or 1)


def _usd_mode(text: str):
    if text == "payment-day":
        return None
    if text.startswith("fixed:"):
        try:
            return date.fromisoformat(text[len("fixed:"):])
        except ValueError:
            pass
    raise EstimaError(f"--usd-mode must be payment-day or fixed:YYYY-MM-DD, got {text!r}")


def _ow_policy(args) -> OwPolicy:
    policy = args.ow_policy.replace("-", "_")
    return OwPolicy(policy, args.ow_threshold)


def _load_ledger(args, manifest: Manifest):
    manifest.add_input("ledger", args.ledger)
    return load_ledger(args.ledger, strict_validation=args.strict)


def _height(args, ledger) -> int:
    h = args.height if args.height is not None else ledger.max_height
    if h < 0:
        raise EstimaError("height must be >= 0")
    return h


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


# --- commands -------------------------------------------------------------


def cmd_estimate(args, manifest: Manifest) -> None:
    if args.sweep:
        methods = list(SELECTED_METHODOLOGIES)
    else:
        methods = [parse_methodology(args.method).canonical_name]
    specs = [parse_methodology(m) for m in methods]
    ledger = _load_ledger(args, manifest)
    height = _height(args, ledger)
    manifest.add_input("seeds", args.seeds)
    seeds = load_seeds(args.seeds)
    ranges = None
    if args.ranges:
        manifest.add_input("ranges", args.ranges)
        ranges = load_ranges(args.ranges)
        manifest.data["ranges_sha256"] = _json_digest(ranges_to_json(ranges))
    if not ranges and any(s.has("VF") or s.has("TF") for s in specs):
        raise EstimaError("value/time filtering needs a non-empty --ranges file")
    tags = None
    if args.tags:
        manifest.add_input("tags", args.tags)
        tags = load_tags(args.tags)
    rates = None
    if args.rates:
        manifest.add_input("rates", args.rates)
        rates = load_rates(args.rates)
    manifest.data["height"] = height
    manifest.data["methodologies"] = [s.canonical_name for s in specs]
    manifest.data["usd_mode"] = args.usd_mode
    manifest.data["rate_fallback"] = args.rate_fallback
    manifest.data["ow_policy"] = {"policy": args.ow_policy, "threshold": args.ow_threshold}
    fallback = PREVIOUS_DAY if args.rate_fallback == "previous-day" else STRICT
    reports = sweep(
        seeds,
        ledger,
        height,
        [s.canonical_name for s in specs],
        group_by=args.group_by == "label",
        workers=_workers(),
        ranges=ranges,
        tags=tags,
        rates=rates,
        fixed_day=_usd_mode(args.usd_mode),
        fallback=fallback,
        ow_policy=_ow_policy(args),
        clusters=ClusterCache(ledger, height, not args.include_coinjoin),
    )
    for r in reports:
        for w in r.warnings:
            print(f"warning: {r.methodology}: {w}", file=sys.stderr)
    _emit(args.out, _csv(REPORT_COLUMNS, ([r.row()[c] for c in REPORT_COLUMNS] for r in reports)))
    if args.json:
        doc = {"manifest": manifest.data, "reports": [r.to_json() for r in reports]}
        _emit(args.json, json.dumps(doc, indent=2, sort_keys=True) + "\n")
    if args.deposits:
        rows = (
            [r.methodology, r.group] + [d[c] for c in DEPOSIT_COLUMNS]
            for r in reports
            for d in r.deposit_rows()
        )
        _emit(args.deposits, _csv(("methodology", "group") + DEPOSIT_COLUMNS, rows))


def cmd_cluster(args, manifest: Manifest) -> None:
    ledger = _load_ledger(args, manifest)
    height = _height(args, ledger)
    manifest.data["height"] = height
    manifest.data["clustering"] = args.kind
    build = build_mica_clusters if args.kind == "MI+CA" else build_mi_clusters
    index = build(ledger, height, not args.include_coinjoin)
    _emit(args.out, _csv(("address", "cluster_id", "cluster_size"), index.rows()))


def cmd_evasion(args, manifest: Manifest) -> None:
    ledger = _load_ledger(args, manifest)
    height = _height(args, ledger)
    manifest.data["height"] = height
    manifest.add_input("seeds", args.seeds)
    seeds = load_seeds(args.seeds)
    tags = None
    if args.tags:
        manifest.add_input("tags", args.tags)
        tags = load_tags(args.tags)
    result = evasion_stats(seeds, ledger, height, tags, _ow_policy(args))
    _emit(args.out, stats_csv(result))
    if args.cdf:
        _emit(args.cdf, cdf_csv(result.cdf if args.cdf_scope == "seeds" else result.expanded_cdf))


def cmd_scan(args, manifest: Manifest) -> None:
    ledger = _load_ledger(args, manifest)
    manifest.data["height"] = [args.from_height, args.to_height]
    manifest.data["release_value"] = args.release_value
    manifest.data["omni_filter"] = args.omni_filter
    result = scan_signature(ledger, args.from_height, args.to_height, args.release_value, args.omni_filter)
    rows = (
        [m.txid, m.key_release_address, m.payment_address, m.height, m.key_payload.hex()]
        for m in result.matches
    )
    _emit(args.out, _csv(("txid", "release_addr", "payment_addr", "height", "payload_hex"), rows))
    print(
        f"{len(result.matches)} matches from {len(result.release_addresses)} release addresses",
        file=sys.stderr,
    )


def cmd_deadbolt_expand(args, manifest: Manifest) -> None:
    ledger = _load_ledger(args, manifest)
    height = _height(args, ledger)
    manifest.data["height"] = height
    manifest.add_input("seeds", args.seeds)
    seeds = load_seeds(args.seeds)
    exp = expand_key_release(seeds, ledger, height, args.release_value, args.omni_filter)
    _emit(args.out, "".join(f"{a}\n" for a in sorted(exp.payment_addresses)))
    print(
        f"{len(exp.payment_addresses)} payment addresses via "
        f"{len(exp.release_addresses)} release addresses",
        file=sys.stderr,
    )


def _read_addresses(path) -> list[str]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            a = line.strip().split(",")[0].strip()
            if a and a.lower() != "address":
                out.append(a)
    return out


def cmd_deadbolt_rate(args, manifest: Manifest) -> None:
    ledger = _load_ledger(args, manifest)
    height = _height(args, ledger)
    manifest.data["height"] = height
    manifest.add_input("addresses", args.addresses)
    ranges = DEADBOLT_RANGES
    if args.ranges:
        manifest.add_input("ranges", args.ranges)
        ranges = load_ranges(args.ranges)
    manifest.data["ranges_sha256"] = _json_digest(ranges_to_json(ranges))
    rep = conversion_rate(_read_addresses(args.addresses), ledger, height, ranges)
    rate = f"{float(rep.rate):.6f}"
    _emit(args.out, _csv(("addresses", "paid", "multi_payment", "rate"), [[rep.total, rep.paid, rep.multi_payment, rate]]))


FIXTURES = {"fig1a": gen_fig1a, "fig1b": gen_fig1b, "ca_collapse": gen_ca_collapse}


def cmd_synth(args, manifest: Manifest) -> None:
    manifest.add_input("spec", args.spec)
    try:
        with open(args.spec, encoding="utf-8") as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise EstimaError(f"{args.spec}: {exc}") from None
    if not isinstance(obj, dict):
        raise EstimaError(f"{args.spec}: expected a JSON object")
    if "fixture" in obj:
        name = obj["fixture"]
        if name not in FIXTURES:
            raise EstimaError(f"unknown fixture {name!r}; choose from {', '.join(FIXTURES)}")
        ledger, truth = FIXTURES[name]()
        txs = list(ledger)
    else:
        txs, truth = campaign_transactions(CampaignSpec.from_json(obj))
    dump_ledger(txs, args.out)
    if args.truth:
        _emit(args.truth, truth.dumps())
    if args.rates_out:
        days = [t.day for t in txs]
        _emit(args.rates_out, rates_csv(synthetic_rates(min(days), max(days), obj.get("rng_seed", 0))))


def cmd_validate(args, manifest: Manifest) -> int:
    addrs = list(args.address)
    if args.file:
        addrs += _read_addresses(args.file)
    if not addrs:
        raise EstimaError("no addresses given")
    bad = 0
    lines = []
    for a in addrs:
        ok = validate_btc_address(a)
        bad += not ok
        lines.append(f"{a},{'valid' if ok else 'invalid'}\n")
    _emit(None, "".join(lines))
    return 1 if bad else 0


# --- parser ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="estima", description="Revenue estimation over a Bitcoin UTXO ledger.")
    p.add_argument("--version", action="version", version=f"estima {__version__}")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    common = _Parser(add_help=False)
    common.add_argument("--manifest", help="write the run manifest here")
    common.add_argument("--out", default="-", help="primary output file (default stdout)")

    ledger_opts = _Parser(add_help=False)
    ledger_opts.add_argument("--ledger", required=True, help="JSON-lines transaction file")
    ledger_opts.add_argument("--height", type=int, help="analysis block height (default: last block)")
    ledger_opts.add_argument("--strict", action="store_true", help="reject addresses failing checksum validation")

    ow_opts = _Parser(add_help=False)
    ow_opts.add_argument("--tags", help="tag CSV: address,owner,category")
    ow_opts.add_argument(
        "--ow-policy",
        default=TAG_PLUS_THRESHOLD,
        choices=[TAG_ONLY, TAG_PLUS_THRESHOLD, "tag-only", "tag-plus-threshold"],
    )
    ow_opts.add_argument("--ow-threshold", type=int, default=1000)

    e = sub.add_parser("estimate", parents=[common, ledger_opts, ow_opts], help="estimate revenue")
    e.set_defaults(func=cmd_estimate)
    which = e.add_mutually_exclusive_group(required=True)
    which.add_argument("--method", help='methodology, e.g. "DD-OW+MI-DC"')
    which.add_argument("--sweep", action="store_true", help="run the 15 selected methodologies")
    e.add_argument("--seeds", required=True, help="CSV: address[,group_label]")
    e.add_argument("--rates", help="CSV: date,usd_per_btc")
    e.add_argument("--usd-mode", default="payment-day", help="payment-day or fixed:YYYY-MM-DD")
    e.add_argument("--rate-fallback", default="strict", choices=["strict", "previous-day"])
    e.add_argument("--ranges", help="JSON value/time ranges for VF/TF")
    e.add_argument("--group-by", choices=["label"], help="one report per seed group label plus a total")
    e.add_argument("--include-coinjoin", action="store_true", help="let CoinJoin-shaped txs join clusters")
    e.add_argument("--json", help="also write the reports (with manifest) as JSON")
    e.add_argument("--deposits", help="also write every counted deposit as CSV")

    c = sub.add_parser("cluster", parents=[common, ledger_opts], help="dump the address partition")
    c.set_defaults(func=cmd_cluster)
    c.add_argument("--kind", default="MI", choices=["MI", "MI+CA"])
    c.add_argument("--include-coinjoin", action="store_true")

    v = sub.add_parser("evasion", parents=[common, ledger_opts, ow_opts], help="1-to-n withdrawal statistics")
    v.set_defaults(func=cmd_evasion)
    v.add_argument("--seeds", required=True)
    v.add_argument("--cdf", help="write the CDF CSV here")
    v.add_argument("--cdf-scope", default="seeds", choices=["seeds", "expanded"])

    def release_opts(sp):
        sp.add_argument("--release-value", type=int, default=RELEASE_VALUE)
        sp.add_argument(
            "--omni-filter", action=argparse.BooleanOptionalAction, default=True,
            help="reject OP_RETURN payloads starting with 'omni' (default on)",
        )

    s = sub.add_parser("scan-deadbolt", parents=[common], help="scan for key-release transactions")
    s.set_defaults(func=cmd_scan)
    s.add_argument("--ledger", required=True)
    s.add_argument("--strict", action="store_true")
    s.add_argument("--from-height", type=int, required=True)
    s.add_argument("--to-height", type=int, required=True)
    release_opts(s)

    x = sub.add_parser("deadbolt-expand", parents=[common, ledger_opts], help="payment addresses via release addresses")
    x.set_defaults(func=cmd_deadbolt_expand)
    x.add_argument("--seeds", required=True)
    release_opts(x)

    r = sub.add_parser("deadbolt-rate", parents=[common, ledger_opts], help="share of addresses that paid")
    r.set_defaults(func=cmd_deadbolt_rate)
    r.add_argument("--addresses", required=True, help="one address per line")
    r.add_argument("--ranges", help="JSON ranges (default: the DeadBolt ransom ranges)")

    y = sub.add_parser("synth", parents=[_manifest_only()], help="generate a synthetic ledger")
    y.set_defaults(func=cmd_synth)
    y.add_argument("--spec", required=True, help="campaign spec JSON, or {\"fixture\": name}")
    y.add_argument("--out", required=True, help="ledger JSON-lines output")
    y.add_argument("--truth", help="ground truth JSON output")
    y.add_argument("--rates-out", help="also write a synthetic daily rates CSV")

    a = sub.add_parser("validate-address", parents=[_manifest_only()], help="check address checksums")
    a.set_defaults(func=cmd_validate)
    a.add_argument("address", nargs="*")
    a.add_argument("--file", help="file with one address per line")
    return p


def _manifest_only():
    m = _Parser(add_help=False)
    m.add_argument("--manifest")
    return m


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    manifest = Manifest(argv, args.command)
    try:
        code = args.func(args, manifest)
        _write_manifest(args, manifest)
        return code or 0
    except InvariantError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 2
    except (EstimaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
