"""How well do interbank loans offset the payment imbalances they fund?

Sweeps the compensation fraction of the generator and prints the daily
correlation between loan and nonloan imbalances.
"""
import numpy as np

from settleflow.flowlab import aggregate_flows, imbalance_correlation, imbalances, size_tolerance_correlation
from settleflow.loanmatch import extract_loans
from settleflow.synthgen import GeneratorConfig, generate_week


def daily_correlations(config):
    week = generate_week(config).week
    result = extract_loans(week)
    rows = []
    # the last day has no repayments inside the window, so it is skipped
    for d in range(week.n_days - 1):
        loan = imbalances(aggregate_flows(result.first_legs(d), "loan", d, week.banks))
        nonloan_net = aggregate_flows(result.nonloans(d), "nonloan", d, week.banks)
        rows.append((imbalance_correlation(loan, imbalances(nonloan_net)),
                     size_tolerance_correlation(loan, nonloan_net)))
    return np.array(rows)


print("phi   mean r   max r     size tolerance")
for phi in (0.0, 0.5, 1.0):
    r = daily_correlations(GeneratorConfig(seed=1, compensation_fraction=phi))
    print(f"{phi:.2f}  {r[:, 0].mean():+.3f}   {r[:, 0].max():+.3f}  {r[:, 1].mean():+.3f}")
