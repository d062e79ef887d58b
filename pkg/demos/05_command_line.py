"""The same workflow through the command line, writing files to a temp directory."""

import json
import tempfile
from pathlib import Path

from estima.cli import main

work = Path(tempfile.mkdtemp(prefix="estima-demo-"))
(work / "spec.json").write_text(json.dumps({
    "victims": 200, "reuse_probability": 0.1, "key_release": True, "seed_sample_size": 10,
    "internal_shuffles": 30, "rng_seed": 1,
}))
(work / "ranges.json").write_text(
    '[{"from":"2022-01-01","to":"2023-04-12","values_btc":[[0.029,0.031],[0.049,0.051]]}]'
)


def run(*argv):
    print("$ estima", " ".join(argv))
    code = main(list(argv))
    print(f"(exit {code})\n")


run("synth", "--spec", str(work / "spec.json"), "--out", str(work / "ledger.jsonl"),
    "--truth", str(work / "truth.json"), "--rates-out", str(work / "rates.csv"))
truth = json.loads((work / "truth.json").read_text())
(work / "seeds.csv").write_text("address\n" + "".join(f"{s}\n" for s in truth["seeds"]))

common = ["--ledger", str(work / "ledger.jsonl"), "--seeds", str(work / "seeds.csv")]
run("estimate", "--sweep", *common, "--rates", str(work / "rates.csv"), "--ranges", str(work / "ranges.json"),
    "--out", str(work / "report.csv"))
print((work / "report.csv").read_text())
run("deadbolt-expand", *common, "--out", str(work / "addresses.txt"))
run("deadbolt-rate", "--ledger", str(work / "ledger.jsonl"), "--addresses", str(work / "addresses.txt"))
print("files in", work, sorted(p.name for p in work.iterdir()))
