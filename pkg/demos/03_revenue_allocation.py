"""Turn accumulated engagement into exact integer revenue splits."""

import tempfile
from pathlib import Path

import numpy as np

from engagement.allocate import allocate_revenue, export_allocation_csv, largest_remainder, read_allocation_csv
from engagement.classify import ProbVector
from engagement.score import EventScore, ScoreLedger, normalize

classes = ("atlas-press", "culinary-guild", "timber-coop")
rng = np.random.default_rng(3)

ledger = ScoreLedger(classes, "demo-fingerprint")
for i in range(500):
    # events lean toward the first provider
    prob = rng.dirichlet((4.0, 2.0, 1.0))
    sims = rng.uniform(-0.2, 0.9, 3)
    ledger.ingest_score(EventScore(f"e{i}", ProbVector(classes, prob), sims, 1.0, "concat"))

report = normalize(ledger)
for cid in report.class_ids:
    print(f"{cid:15s} prob_share={report.prob_share(cid):.4f}")

total = 1_000_000  # minor units, e.g. cents
for basis in ("prob", "sim", "blend"):
    alpha = 0.7 if basis == "blend" else None
    allocation = allocate_revenue(total, report, basis, alpha)
    row = "  ".join(f"{c}={allocation.shares[c]:>7d}" for c in classes)
    print(f"{basis:5s} -> {row}  sum={sum(allocation.shares.values())}")

# the rounding rule in isolation: quotas 333.4 / 333.3 / 333.3
shares = largest_remainder(1000, {"a": 3334, "b": 3333, "c": 3333})
print("largest remainder on a near-tie:", shares, "sum", sum(shares.values()))

csv_path = Path(tempfile.mkdtemp()) / "allocation.csv"
export_allocation_csv(allocate_revenue(total, report, "prob"), csv_path)
print("\nCSV export (checksummed):")
print(csv_path.read_text(), end="")
back = read_allocation_csv(csv_path)
print("round trip ok:", back.shares == allocate_revenue(total, report, "prob").shares)
