"""Cross-session retention: lower the mean return day with CEM.

The return probability composes a personal bias, a response bias
(0.5 * session mean reward), and a global bias, so better recommendations
bring users back sooner. CEM searches a linear policy for slates that do.
"""

import numpy as np

from slatesim import (
    EnvConfig, PretrainConfig, RetentionParams, SyntheticConfig, UirmConfig,
    UirmModel, pretrain, split_train_test, synth_generate,
)
from slatesim.agents import CemAgent, CemConfig, LinearPolicy, RandomAgent, cem_iterate
from slatesim.metrics import retention_metrics
from slatesim.training import collect_sessions, make_featurizer, retention_objective

dataset, _ = synth_generate(SyntheticConfig(n_users=300, n_items=100, days=8, seed=5))
train, test = split_train_test(dataset, 0.8)
model = UirmModel(dataset.items.n_items, dataset.users.feature_dim, dataset.schema,
                  UirmConfig(embed_dim=32, hist_cap=16, seed=0))
pretrain(model, train, PretrainConfig(epochs=5, lr=5e-3, seed=0, target_auc=0.85),
         val=test)

retention = RetentionParams(model.state_dim, seed=0, global_bias=-0.4)
config = EnvConfig(mode="cross_session", slate_size=5, max_step=8, hist_cap=16,
                   max_sessions=3)
featurizer = make_featurizer(train, model)

random_agent = RandomAgent(train.items.n_items, config.slate_size, seed=1)
rd, ret_rate = retention_metrics(collect_sessions(
    train, model, retention, config, random_agent, n_sessions=400, seed=99))
print(f"random policy: return day {rd:.3f}, next-day retention {ret_rate:.3f}")

policy = LinearPolicy(featurizer, model.config.embed_dim)
objective = retention_objective(train, model, retention, config, policy,
                                n_sessions=40, seed=13)
result = cem_iterate(objective, np.zeros(policy.n_params),
                     CemConfig(population=24, elite_frac=0.25, iterations=8, seed=0))

print("\niter  population-mean return day   best so far")
for row in result.trace:
    print(f"{row['iteration']:4d}  {-row['population_mean']:27.3f}  "
          f"{-row['best_value']:.3f}")

agent = CemAgent(policy, result.best_params, train.items, config.slate_size)
rd2, ret2 = retention_metrics(collect_sessions(
    train, model, retention, config, agent, n_sessions=400, seed=99))
print(f"\ncem policy:    return day {rd2:.3f}, next-day retention {ret2:.3f}")
print(f"improvement:   {rd - rd2:+.3f} days")
