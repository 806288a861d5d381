"""Degree structure, flow persistence and distribution fits for one synthetic week."""
import numpy as np

from settleflow.flowlab import (
    aggregate_flows, flow_distance, net_flows, persistence, random_flow_distance_baseline,
)
from settleflow.loanmatch import extract_loans
from settleflow.netstats import (
    ad_exponential_test, assortativity, degree_sequences, degree_value_shares, fit_gmm, fit_power_law,
    ks_two_sample, transactions_per_flow,
)
from settleflow.synthgen import GeneratorConfig, generate_week

week = generate_week(GeneratorConfig(seed=2)).week
result = extract_loans(week)
gross = [aggregate_flows(result.nonloans(d), "nonloan", d, week.banks) for d in range(week.n_days)]
nets = [net_flows(g) for g in gross]

print("day  edges  r_in    r_out   low/high in-degree share")
for d, g in enumerate(nets):
    low, high = degree_value_shares(g, "in")
    print(f"{d:>3}  {len(g.edges):>5}  {assortativity(g, 'in'):+.3f}  {assortativity(g, 'out'):+.3f}"
          f"  {low:.3f} / {high:.3f}")

# consecutive-day flow similarity against a random baseline
base = random_flow_distance_baseline(len(week.banks), trials=2000)
for d in range(week.n_days - 1):
    p = persistence(gross[d], gross[d + 1])
    dist = flow_distance(gross[d], gross[d + 1])
    print(f"days {d}-{d + 1}: {100 * p.fraction_count:.0f}% persistent flows, distance {dist:.3f}"
          f" (random {base.mean:.3f} +/- {base.std:.3f})")

# payment values are a two-component mixture in log10 dollars
u = np.log10(np.array([t.value for t in week.days[0]], dtype=float) / 100)
fit = fit_gmm(u, 2, seed=0)
for m, v, p in fit.components:
    print(f"component mean {m:.2f}  var {v:.2f}  weight {p:.2f}")

fit = fit_power_law(transactions_per_flow(gross[0]))
print(f"transactions per flow ~ n^{fit.exponent:.2f} (+/- {fit.stderr:.2f})")

din = degree_sequences(nets[0]).in_degree
dout = degree_sequences(nets[0]).out_degree
ks = ks_two_sample(list(din.values()), list(dout.values()))
print(f"in vs out degree KS D={ks.statistic:.3f} p={ks.p_value:.3f}")
ad = ad_exponential_test([v for v in din.values() if v > 0])
print(f"in-degree exponential AD A2={ad.statistic:.3f} reject={ad.reject_at_5pct}")
