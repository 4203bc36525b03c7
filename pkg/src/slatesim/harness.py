"""Config-driven experiment pipeline: ingest, pretrain, train, evaluate, aggregate.

Configs are flat `key = value` text files with `#` comments and dotted
section prefixes. Every known key has a default; several carry a declared
search set, and values outside it are rejected unless the key was set
through an explicit override.
"""

from __future__ import annotations

import hashlib
import json
import os
import traceback
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .agents import (
    A2cAgent, AcConfig, CemAgent, CemConfig, CfAgent, CfConfig, DdpgAgent,
    LinearPolicy, RandomAgent, Td3Agent, cem_iterate, cf_train,
)
from .agents.persist import save_agent
from .core import DEFAULT_HISTORY_CAP
from .data import (
    KUAIRAND_COLUMNS, ML1M_COLUMNS, LogDataset, SyntheticConfig, datasets_equal,
    empirical_mean_return_day, kcore_filter, load_dataset, parse_log,
    save_dataset, segment_sessions, split_train_test, synth_generate,
)
from .env import BatchRecEnv, EnvConfig, RetentionParams, TrajectoryLogger, fit_global_bias
from .metrics import MetricsReport, coverage, ild, l_reward, retention_metrics, session_metrics
from .training import collect_sessions, make_featurizer, retention_objective, train_agent
from .uirm import PretrainConfig, UirmConfig, UirmModel, evaluate_auc, pretrain

OUT_ROOT_ENV_VAR = "SLATESIM_OUT"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3


class ConfigError(ValueError):
    """Raised for unknown keys, type mismatches, or out-of-range values."""


@dataclass(frozen=True)
class KeySpec:
    default: object
    choices: tuple | None = None   # declared search set, enforced for file values
    minimum: float | None = None


CONFIG_SPEC: dict[str, KeySpec] = {
    "data.source": KeySpec("synthetic"),
    "data.format": KeySpec("kuairand", choices=("kuairand", "ml1m")),
    "data.kcore": KeySpec(0, minimum=0),
    "data.split_ratio": KeySpec(0.8),
    "data.synth.users": KeySpec(600, minimum=1),
    "data.synth.items": KeySpec(200, minimum=1),
    "data.synth.days": KeySpec(8, minimum=1),
    "data.synth.session_len": KeySpec(10, minimum=1),
    "data.synth.latent_dim": KeySpec(16, minimum=1),
    "env.mode": KeySpec("whole_session",
                        choices=("request", "whole_session", "cross_session")),
    "env.slate_size": KeySpec(20, choices=(5, 10, 15, 20, 25, 30)),
    "env.max_step": KeySpec(20, choices=(5, 10, 15, 20, 25, 30)),
    "env.temper_rate": KeySpec(1.0),
    "env.leave_threshold": KeySpec(1.0),
    "env.max_sessions": KeySpec(10, minimum=1),
    "env.max_return_day": KeySpec(10, minimum=1),
    "env.hist_cap": KeySpec(DEFAULT_HISTORY_CAP, minimum=1),
    "uirm.embed_dim": KeySpec(32, choices=(32, 64, 128)),
    "uirm.rho": KeySpec(0.1, minimum=0.0),
    "uirm.dropout": KeySpec(0.2),
    "uirm.epochs": KeySpec(10, minimum=1),
    "uirm.lr": KeySpec(5e-4, choices=(5e-4, 1e-4, 5e-5, 1e-5)),
    "uirm.l2": KeySpec(1e-5, choices=(1e-4, 5e-5, 1e-5, 5e-6)),
    "uirm.batch_size": KeySpec(64, choices=(64,)),
    "uirm.target_auc": KeySpec(0.0),
    "uirm.checkpoint": KeySpec(""),
    "retention.lambda1": KeySpec(0.5),
    "retention.lambda2": KeySpec(0.75),
    "retention.global_bias": KeySpec(0.0),
    "retention.fit_bias": KeySpec(False),
    "agent.name": KeySpec("random",
                          choices=("random", "cf", "a2c", "ddpg", "td3", "cem")),
    "agent.actor_lr": KeySpec(1e-4, choices=(5e-4, 1e-4, 5e-5, 1e-5, 5e-6, 1e-6)),
    "agent.critic_lr": KeySpec(1e-3, choices=(1e-3, 1e-4, 1e-5)),
    "agent.gamma": KeySpec(0.9),
    "agent.tau": KeySpec(0.005),
    "agent.noise": KeySpec(0.1),
    "agent.batch_size": KeySpec(64, choices=(64,)),
    "agent.updates": KeySpec(2000, minimum=0),
    "agent.lanes": KeySpec(64, minimum=1),
    "agent.min_fill": KeySpec(1000, minimum=1),
    "agent.cf_lr": KeySpec(5e-3),
    "agent.cf_epochs": KeySpec(5, minimum=1),
    "agent.cem_population": KeySpec(24, minimum=10),
    "agent.cem_elite_frac": KeySpec(0.25),
    "agent.cem_iterations": KeySpec(10, minimum=1),
    "agent.cem_sessions": KeySpec(40, minimum=1),
    "eval.sessions": KeySpec(200, minimum=1),
    "eval.lanes": KeySpec(16, minimum=1),
    "eval.batch": KeySpec(64, minimum=1),
    "run.seeds": KeySpec((1, 2, 3, 4, 5)),
}


def _parse_value(key: str, raw: str):
    default = CONFIG_SPEC[key].default
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(int(x) for x in raw.split(",") if x.strip())
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully-resolved configuration with override provenance."""

    values: dict
    overridden: frozenset = field(default_factory=frozenset)

    def __getitem__(self, key: str):
        return self.values[key]

    @property
    def seeds(self) -> tuple[int, ...]:
        return self.values["run.seeds"]

    def with_overrides(self, overrides: dict) -> "ExperimentConfig":
        values = dict(self.values)
        touched = set(self.overridden)
        for key, raw in overrides.items():
            if key not in CONFIG_SPEC:
                raise ConfigError(f"unknown key {key!r}")
            values[key] = _parse_value(key, raw) if isinstance(raw, str) else raw
            touched.add(key)
        cfg = ExperimentConfig(values=values, overridden=frozenset(touched))
        cfg.validate()
        return cfg

    def validate(self) -> None:
        for key, value in self.values.items():
            spec = CONFIG_SPEC[key]
            if spec.minimum is not None and value < spec.minimum:
                raise ConfigError(f"{key} must be >= {spec.minimum}, got {value}")
            if (spec.choices is not None and value not in spec.choices
                    and key not in self.overridden
                    and value != spec.default):
                raise ConfigError(
                    f"{key}={value} is outside the declared search set "
                    f"{spec.choices}; use an explicit override to force it")
        if not 0.0 < self.values["data.split_ratio"] < 1.0:
            raise ConfigError("data.split_ratio must lie strictly between 0 and 1")
        if not self.values["run.seeds"]:
            raise ConfigError("run.seeds must be non-empty")
        if self.values["env.slate_size"] < 1:
            raise ConfigError("env.slate_size must be positive")
        if not 0.0 < self.values["agent.cem_elite_frac"] <= 1.0:
            raise ConfigError("agent.cem_elite_frac must lie in (0, 1]")

    def serialize(self) -> str:
        lines = [f"{key} = {_format_value(self.values[key])}"
                 for key in sorted(self.values)]
        return "\n".join(lines) + "\n"

    # -- typed sub-configs --------------------------------------------------

    def env_config(self) -> EnvConfig:
        v = self.values
        return EnvConfig(
            mode=v["env.mode"], slate_size=v["env.slate_size"],
            max_step=v["env.max_step"], temper_rate=v["env.temper_rate"],
            leave_threshold=v["env.leave_threshold"],
            max_sessions=v["env.max_sessions"],
            max_return_day=v["env.max_return_day"], hist_cap=v["env.hist_cap"])

    def synth_config(self, seed: int) -> SyntheticConfig:
        v = self.values
        return SyntheticConfig(
            n_users=v["data.synth.users"], n_items=v["data.synth.items"],
            days=v["data.synth.days"], seed=seed,
            latent_dim=v["data.synth.latent_dim"],
            session_len=v["data.synth.session_len"],
            max_return_day=v["env.max_return_day"])

    def uirm_config(self, seed: int) -> UirmConfig:
        v = self.values
        return UirmConfig(embed_dim=v["uirm.embed_dim"], hist_cap=v["env.hist_cap"],
                          rho=v["uirm.rho"], dropout=v["uirm.dropout"], seed=seed)

    def pretrain_config(self, seed: int) -> PretrainConfig:
        v = self.values
        target = v["uirm.target_auc"]
        return PretrainConfig(epochs=v["uirm.epochs"], batch_size=v["uirm.batch_size"],
                              lr=v["uirm.lr"], l2=v["uirm.l2"], seed=seed,
                              target_auc=target if target > 0 else None)

    def ac_config(self, seed: int) -> AcConfig:
        v = self.values
        return AcConfig(gamma=v["agent.gamma"], actor_lr=v["agent.actor_lr"],
                        critic_lr=v["agent.critic_lr"], tau=v["agent.tau"],
                        noise=v["agent.noise"], batch_size=v["agent.batch_size"],
                        min_fill=v["agent.min_fill"], seed=seed)


def default_config() -> ExperimentConfig:
    cfg = ExperimentConfig(values={k: s.default for k, s in CONFIG_SPEC.items()})
    cfg.validate()
    return cfg


def parse_config_text(text: str, overrides: dict | None = None) -> ExperimentConfig:
    values = {k: s.default for k, s in CONFIG_SPEC.items()}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in CONFIG_SPEC:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _parse_value(key, raw)
    cfg = ExperimentConfig(values=values)
    cfg.validate()
    if overrides:
        cfg = cfg.with_overrides(overrides)
    return cfg


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    return parse_config_text(Path(path).read_text(), overrides)


def derive_seed(master: int, stage: str, replicate: int) -> int:
    """Stable per-stage substream seed from a master seed."""
    digest = hashlib.sha256(f"{master}:{stage}:{replicate}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass
class ExperimentResult:
    status: int
    report: MetricsReport | None = None
    failed_stage: str | None = None
    error: str | None = None
    out_dir: str | None = None


# ---------------------------------------------------------------------------
# Pipeline stages.
# ---------------------------------------------------------------------------

def stage_data(cfg: ExperimentConfig, out_dir: Path, master: int
               ) -> tuple[LogDataset, LogDataset]:
    """Build or load the train/test splits; caches containers in out_dir."""
    train_path = out_dir / "train.bin"
    test_path = out_dir / "test.bin"
    if train_path.exists() and test_path.exists():
        return load_dataset(train_path), load_dataset(test_path)

    source = cfg["data.source"]
    if source == "synthetic":
        dataset, _ = synth_generate(cfg.synth_config(derive_seed(master, "data", 0)))
    else:
        path = Path(source)
        if not path.exists():
            raise ConfigError(f"dataset not found: {path}")
        if path.suffix == ".bin":
            dataset = load_dataset(path)
        else:
            columns = KUAIRAND_COLUMNS if cfg["data.format"] == "kuairand" else ML1M_COLUMNS
            dataset = parse_log(path, columns).dataset
        if cfg["data.kcore"] > 0:
            dataset = kcore_filter(dataset, cfg["data.kcore"])
        dataset = segment_sessions(dataset)
    train, test = split_train_test(dataset, cfg["data.split_ratio"])
    save_dataset(train, train_path)
    save_dataset(test, test_path)
    return train, test


def stage_uirm(cfg: ExperimentConfig, train: LogDataset, test: LogDataset,
               seed_dir: Path, seed: int) -> tuple[UirmModel, dict]:
    """Pretrain the response model (or load a fixed checkpoint)."""
    ckpt = seed_dir / "uirm.bin"
    fixed = cfg["uirm.checkpoint"]
    if fixed:
        model = UirmModel.load(fixed)
        aucs = evaluate_auc(model, test, history=train) if test.n_records else {}
        return model, aucs
    if ckpt.exists():
        model = UirmModel.load(ckpt)
        aucs = json.loads((seed_dir / "uirm_auc.json").read_text())
        return model, aucs
    model = UirmModel(train.items.n_items, train.users.feature_dim, train.schema,
                      cfg.uirm_config(seed))
    result = pretrain(model, train, cfg.pretrain_config(seed),
                      val=test if test.n_records else None)
    model.save(ckpt)
    (seed_dir / "pretrain_trace.jsonl").write_text(result.trace_jsonl())
    aucs = evaluate_auc(model, test, history=train) if test.n_records else {}
    (seed_dir / "uirm_auc.json").write_text(json.dumps(aucs, sort_keys=True) + "\n")
    return model, aucs


def stage_retention(cfg: ExperimentConfig, train: LogDataset, model: UirmModel,
                    seed: int) -> RetentionParams:
    retention = RetentionParams(
        model.state_dim, lambda1=cfg["retention.lambda1"],
        lambda2=cfg["retention.lambda2"], global_bias=cfg["retention.global_bias"],
        seed=seed)
    if cfg["retention.fit_bias"]:
        target = empirical_mean_return_day(train, cfg["env.max_return_day"])
        fit_global_bias(train, model, retention, cfg.env_config(), target,
                        n_sessions=1000, seed=seed)
    return retention


def build_agent(cfg: ExperimentConfig, train: LogDataset, model: UirmModel,
                retention: RetentionParams, seed: int):
    """Construct and (where applicable) train the configured agent."""
    name = cfg["agent.name"]
    k = cfg["env.slate_size"]
    env_cfg = cfg.env_config()
    featurizer = make_featurizer(train, model)
    trace: list[dict] = []

    if name == "random":
        return RandomAgent(train.items.n_items, k, seed=seed), trace
    if name == "cf":
        cf_model, losses = cf_train(train, CfConfig(
            dim=cfg["uirm.embed_dim"], lr=cfg["agent.cf_lr"],
            epochs=cfg["agent.cf_epochs"], batch_size=cfg["agent.batch_size"],
            seed=seed))
        trace = [{"epoch": i, "loss": loss} for i, loss in enumerate(losses)]
        return CfAgent(cf_model, k), trace
    if name == "cem":
        policy = LinearPolicy(featurizer, model.config.embed_dim)
        objective = retention_objective(
            train, model, retention, env_cfg, policy,
            n_sessions=cfg["agent.cem_sessions"], seed=derive_seed(seed, "cem-eval", 0))
        result = cem_iterate(objective, np.zeros(policy.n_params), CemConfig(
            population=cfg["agent.cem_population"],
            elite_frac=cfg["agent.cem_elite_frac"],
            iterations=cfg["agent.cem_iterations"], seed=seed))
        trace = result.trace
        return CemAgent(policy, result.best_params, train.items, k), trace

    cls = {"a2c": A2cAgent, "ddpg": DdpgAgent, "td3": Td3Agent}.get(name)
    if cls is None:
        raise ConfigError(f"unknown agent {name!r}")
    agent = cls(featurizer, train.items, k, config=cfg.ac_config(seed))
    env = BatchRecEnv(train, model, retention, env_cfg,
                      n_lanes=cfg["agent.lanes"], seed=derive_seed(seed, "rollout", 0))
    trace = train_agent(env, agent, featurizer, n_updates=cfg["agent.updates"])
    return agent, trace


def evaluate_run(cfg: ExperimentConfig, train: LogDataset, model: UirmModel,
                 retention: RetentionParams, agent, seed_dir: Path,
                 seed: int) -> dict[str, float]:
    """Roll the frozen policy, log the trajectory, and compute all metrics."""
    logger = TrajectoryLogger(seed_dir / "trajectory.jsonl")
    records = collect_sessions(train, model, retention, cfg.env_config(), agent,
                               n_sessions=cfg["eval.sessions"],
                               n_lanes=cfg["eval.lanes"],
                               seed=derive_seed(seed, "eval", 0), logger=logger)
    logger.close()
    return metrics_from_records(records, train, model, batch=cfg["eval.batch"])


def metrics_from_records(records: list[dict], dataset: LogDataset,
                         model: UirmModel, batch: int = 64) -> dict[str, float]:
    """Scalar metric values from trajectory records.

    Coverage follows the mini-batch definition: the mean distinct-item count
    over consecutive `batch`-sized chunks of requests.
    """
    feedback = [np.asarray(r["feedback"]) for r in records]
    slates = [tuple(r["action"]) for r in records]
    avg_l, max_l = l_reward(feedback, dataset.schema)
    chunks = [slates[i:i + batch] for i in range(0, len(slates), batch)]
    cov = float(np.mean([coverage(c) for c in chunks]))
    sess = session_metrics(records)
    out = {
        "avg_l_reward": avg_l,
        "max_l_reward": max_l,
        "coverage": cov,
        "ild": ild(slates, model.store["item_emb"]),
        "depth": sess.depth,
        "avg_reward": sess.avg_reward,
        "total_reward": sess.total_reward,
    }
    try:
        rd, retention_rate = retention_metrics(records)
        out["return_day"] = rd
        out["user_retention"] = retention_rate
    except ValueError:
        pass
    return out


def run_experiment(cfg: ExperimentConfig, out_dir, master_seed: int | None = None
                   ) -> ExperimentResult:
    """Full pipeline per seed plus the cross-seed aggregate.

    Writes per-seed artifacts under seed_<n>/ and the aggregated
    report.json / report.tsv / manifest.json at the top level. Re-running
    with the same config and seeds reproduces every metric byte.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.txt").write_text(cfg.serialize())
    master = cfg.seeds[0] if master_seed is None else master_seed

    stage = "data"
    try:
        train, test = stage_data(cfg, out_dir, master)
    except Exception as exc:  # noqa: BLE001 - stage boundary
        return _failure(out_dir, stage, exc)

    per_seed: dict[str, list[float]] = {}
    auc_values: dict[str, list[float]] = {}
    artifacts = ["config.txt", "train.bin", "test.bin"]
    for replicate, seed in enumerate(cfg.seeds):
        seed_dir = out_dir / f"seed_{seed}"
        seed_dir.mkdir(exist_ok=True)
        try:
            stage = "uirm"
            model, aucs = stage_uirm(cfg, train, test, seed_dir,
                                     derive_seed(master, "uirm", replicate))
            stage = "retention"
            retention = stage_retention(cfg, train, model,
                                        derive_seed(master, "retention", replicate))
            stage = "agent"
            agent, trace = build_agent(cfg, train, model, retention,
                                       derive_seed(master, "agent", replicate))
            save_agent(agent, seed_dir / "agent.bin")
            with open(seed_dir / "train_trace.jsonl", "w") as fh:
                for entry in trace:
                    fh.write(json.dumps(entry, sort_keys=True) + "\n")
            stage = "evaluate"
            scalars = evaluate_run(cfg, train, model, retention, agent, seed_dir,
                                   derive_seed(master, "evaluate", replicate))
        except Exception as exc:  # noqa: BLE001 - stage boundary
            return _failure(out_dir, stage, exc, seed=seed)
        (seed_dir / "metrics.json").write_text(
            json.dumps(scalars, sort_keys=True) + "\n")
        for key, value in scalars.items():
            per_seed.setdefault(key, []).append(value)
        for name, value in aucs.items():
            if value is not None:
                auc_values.setdefault(name, []).append(value)
        for name in ("uirm.bin", "agent.bin", "trajectory.jsonl", "metrics.json"):
            if (seed_dir / name).exists():
                artifacts.append(f"seed_{seed}/{name}")

    auc_mean = {name: float(np.mean(vals)) for name, vals in sorted(auc_values.items())}
    report = MetricsReport.from_seed_values(per_seed, auc_mean)
    emit_metrics(report, out_dir, artifacts)
    return ExperimentResult(status=EXIT_OK, report=report, out_dir=str(out_dir))


def _failure(out_dir: Path, stage: str, exc: Exception, seed: int | None = None
             ) -> ExperimentResult:
    detail = {
        "stage": stage,
        "seed": seed,
        "error": f"{type(exc).__name__}: {exc}",
        "traceback": traceback.format_exc(),
    }
    (out_dir / "failure.json").write_text(json.dumps(detail, indent=2) + "\n")
    return ExperimentResult(status=EXIT_STAGE, failed_stage=stage,
                            error=detail["error"], out_dir=str(out_dir))


def emit_metrics(report: MetricsReport, out_dir, artifacts: list[str] | None = None
                 ) -> None:
    """Write the structured report, the flat table, and the artifact manifest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(report.to_json())
    (out_dir / "report.tsv").write_text(report.to_flat_table())
    listed = list(artifacts or [])
    manifest = {"metrics": "report.json", "table": "report.tsv",
                "artifacts": listed}
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n")


def run_sweep(cfg: ExperimentConfig, key: str, values: list, out_root
              ) -> list[ExperimentResult]:
    """One full experiment per value of `key`, in sibling directories."""
    out_root = Path(out_root)
    results = []
    for value in values:
        swept = cfg.with_overrides({key: value if isinstance(value, str) else
                                    _format_value(value)})
        sub = out_root / f"{key.replace('.', '_')}={_format_value(swept[key])}"
        results.append(run_experiment(swept, sub))
    return results


def resolve_out_dir(explicit: str | None, default_name: str = "run") -> Path:
    """--out flag, else $SLATESIM_OUT/<name>, else ./runs/<name>."""
    if explicit:
        return Path(explicit)
    root = os.environ.get(OUT_ROOT_ENV_VAR)
    return (Path(root) if root else Path("runs")) / default_name
