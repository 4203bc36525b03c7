"""Generate a synthetic interaction log and inspect its distributions.

The generator plants user/item latent vectors, draws multi-behavior feedback
from logistic models of their dot products, and spaces each user's active
days by truncated-geometric return gaps. The summary at the end shows the
behavior base rates and the return-day histogram.
"""

import numpy as np

from slatesim import SyntheticConfig, summarize_distributions, synth_generate
from slatesim.data.synth import true_probability

config = SyntheticConfig(n_users=400, n_items=150, days=10, seed=7)
dataset, truth = synth_generate(config)

print(f"users={dataset.users.n_users} items={dataset.items.n_items} "
      f"records={dataset.n_records} sessions={dataset.sessions.n_sessions}")

# one record up close
rec = dataset.record(0)
print(f"\nfirst record: user={rec.user_id} item={rec.item_id} "
      f"day={rec.date} behaviors={rec.behaviors.tolist()}")
probs = true_probability(truth, dataset.user_idx[0], [dataset.item_idx[0]])[0]
print("ground-truth probabilities behind it:",
      np.array2string(probs, precision=3))

report = summarize_distributions(dataset)
print("\nbehavior base rates:")
for name, rate in report.behavior_rates.items():
    print(f"  {name:10s} {rate:.4f}")

print("\nreturn-day distribution (clamped at day 10):")
for day in sorted(report.return_day_pmf):
    bar = "#" * int(200 * report.return_day_pmf[day])
    print(f"  day {day:2d}  {report.return_day_pmf[day]:.3f} {bar}")
print(f"mean return day: {report.mean_return_day:.3f}")
