"""Render one day's net nonloan network to DOT, merging small banks into "others".

Writes ``network_day1.dot``; draw it with ``neato -n2 -Tsvg``.
"""
from settleflow.flowlab import aggregate_flows, net_flows
from settleflow.loanmatch import extract_loans
from settleflow.synthgen import GeneratorConfig, generate_week
from settleflow.viz import export_dot, layout_fr, merge_others

week = generate_week(GeneratorConfig(seed=3)).week
result = extract_loans(week)
day = 1
g = net_flows(aggregate_flows(result.nonloans(day), "nonloan", day, week.banks))

# keep the ten busiest banks by gross turnover
turnover = {b: 0 for b in week.banks}
for (s, d), f in g.edges.items():
    turnover[s] += f.value
    turnover[d] += f.value
keep = sorted(turnover, key=lambda b: -turnover[b])[:10]
merged = merge_others(g, keep)

layout = layout_fr(merged, weighted=True, seed=0)
with open("network_day1.dot", "w") as fh:
    fh.write(export_dot(merged, layout, name=f"nonloan_day{day}"))
print(f"{len(merged.banks)} nodes, {len(merged.edges)} edges -> network_day1.dot")
