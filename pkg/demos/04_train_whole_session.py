"""Train DDPG on whole-session reward and compare against the random policy.

Uses a pretrained simulator checkpoint if one exists from demo 02, otherwise
pretrains a fresh one. A few minutes on CPU.
"""

from pathlib import Path

from slatesim import (
    BatchRecEnv, EnvConfig, PretrainConfig, RetentionParams, SyntheticConfig,
    UirmConfig, UirmModel, pretrain, split_train_test, synth_generate,
)
from slatesim.agents import AcConfig, DdpgAgent, RandomAgent
from slatesim.metrics import session_metrics
from slatesim.training import collect_sessions, make_featurizer, train_agent

dataset, _ = synth_generate(SyntheticConfig(n_users=400, n_items=150, days=8, seed=3))
train, test = split_train_test(dataset, 0.8)

ckpt = Path("/tmp/demo_uirm.bin")
if ckpt.exists():
    model = UirmModel.load(ckpt)
    print(f"loaded simulator from {ckpt}")
else:
    model = UirmModel(dataset.items.n_items, dataset.users.feature_dim,
                      dataset.schema, UirmConfig(embed_dim=32, hist_cap=16, seed=0))
    pretrain(model, train, PretrainConfig(epochs=5, lr=5e-3, seed=0,
                                          target_auc=0.85), val=test)

retention = RetentionParams(model.state_dim, seed=0, global_bias=-0.3)
config = EnvConfig(mode="whole_session", slate_size=10, max_step=10, hist_cap=16)
featurizer = make_featurizer(train, model)

random_agent = RandomAgent(train.items.n_items, config.slate_size, seed=1)
baseline = session_metrics(collect_sessions(
    train, model, retention, config, random_agent, n_sessions=300, seed=77))
print(f"random policy: depth={baseline.depth:.2f} "
      f"total_reward={baseline.total_reward:.3f}")

agent = DdpgAgent(featurizer, train.items, k=config.slate_size,
                  config=AcConfig(seed=0, actor_lr=1e-3, critic_lr=3e-3,
                                  noise=0.3, noise_final=0.05, noise_anneal=1500,
                                  batch_size=128))
env = BatchRecEnv(train, model, retention, config, n_lanes=64, seed=55)
trace = train_agent(env, agent, featurizer, n_updates=2000)
print(f"trained for {len(trace)} updates; "
      f"final critic loss {trace[-1]['critic_loss']:.4f}")

result = session_metrics(collect_sessions(
    train, model, retention, config, agent, n_sessions=300, seed=77))
print(f"ddpg policy:   depth={result.depth:.2f} "
      f"total_reward={result.total_reward:.3f}")
print(f"total-reward lift over random: "
      f"{result.total_reward / baseline.total_reward:.2f}x")
