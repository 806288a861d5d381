"""Simulate a labelled week, recover the overnight loans and score them.

Run with ``python3 demos/01_loan_extraction.py [seed]``.
"""
import sys

from settleflow.core import dataset_totals
from settleflow.loanmatch import (
    estimate_contamination, extract_loans, loan_rate_stats, rate_value_fit, score_against_truth,
)
from settleflow.synthgen import GeneratorConfig, generate_week

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
labeled = generate_week(GeneratorConfig(seed=seed))
week = labeled.week

print("day  volume  value (A$ bn)")
for t in dataset_totals(week):
    print(f"{t.day:>3}  {t.volume:>6}  {t.total_value / 100 / 1e9:>12.1f}")

# greedy matching over terms 1..max_term on the residual
result = extract_loans(week)
score = score_against_truth(result.loans, [(t.first_leg, t.second_leg) for t in labeled.truth])
print(f"\nloans found {len(result.loans)}, planted {len(labeled.truth)}")
print(f"precision {score.precision:.4f}  recall {score.recall:.4f}")

for s in result.day_stats():
    print(f"day {s.day}: {s.volume} overnight loans, {100 * s.loan_fraction:.1f}% of value")

# side-band pairs give an estimate of accidental matches inside the box
c = estimate_contamination(week, result=result)
print(f"\nin box {c.in_box}, side band {c.side_band}, expected false {c.expected_false:.1f}")

stats = loan_rate_stats(result.by_term(1))
fit = rate_value_fit(result.by_term(1))
print(f"rate {stats.mean:.3f} +/- {stats.std:.3f} %  (n={stats.n})")
print(f"rate vs log10 value: slope {fit.slope:.4f} +/- {fit.slope_stderr:.4f}")
