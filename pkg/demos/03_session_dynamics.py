"""Watch one simulated session step by step.

A random policy recommends slates; the temper budget drains by the
dissatisfaction (1 - reward) each step, and the session ends when it crosses
the leave threshold or hits the step cap. On leave, the retention head emits
a return probability and a geometric return day.
"""

import numpy as np

from slatesim import (
    EnvConfig, RecEnv, RetentionParams, SyntheticConfig, UirmConfig, UirmModel,
    random_slate, synth_generate,
)

dataset, _ = synth_generate(SyntheticConfig(n_users=200, n_items=100, days=6, seed=5))
model = UirmModel(dataset.items.n_items, dataset.users.feature_dim, dataset.schema,
                  UirmConfig(embed_dim=16, hist_cap=12, seed=0))
retention = RetentionParams(model.state_dim, seed=0, global_bias=-0.2)
config = EnvConfig(mode="whole_session", slate_size=5, max_step=8, hist_cap=12)

env = RecEnv(dataset, model, retention, config, seed=42)
rng = np.random.default_rng(0)

obs = env.reset()
print(f"user {env.state.user}: starting temper {env.state.temper}")
print(f"{'step':>4} {'reward':>8} {'temper':>8} {'leave':>6} {'return day':>11}")
done = False
while not done:
    slate = random_slate(rng, dataset.items.n_items, config.slate_size)
    obs, feedback, done, info = env.step(slate)
    print(f"{info['step']:4d} {feedback.reward:8.3f} {info['temper']:8.3f} "
          f"{feedback.leave:6d} {feedback.return_day if feedback.leave else '':>11}")
    if feedback.leave:
        print(f"\nsession over after {info['step']} steps; "
              f"p_ret={info['p_ret']:.3f}, returns in {feedback.return_day} day(s)")

print("\ncross-session episode (3 sessions):")
config = EnvConfig(mode="cross_session", slate_size=5, max_step=8, hist_cap=12,
                   max_sessions=3)
env = RecEnv(dataset, model, retention, config, seed=43)
env.reset()
done = False
while not done:
    obs, feedback, done, info = env.step(
        random_slate(rng, dataset.items.n_items, config.slate_size))
    if feedback.leave:
        print(f"  session {info['session_index']} ended at simulated day "
              f"{info['day']}; sampled return day {feedback.return_day}")
print(f"episode done; clock-advancing gaps: {info['session_returns']}")
