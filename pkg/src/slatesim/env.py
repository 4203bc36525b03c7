"""Simulation environment: slate in, multi-behavior feedback out.

Each step scores the slate with the immediate-response model, samples
feedback bits, converts them to a reward, drains the user's temper by the
dissatisfaction (1 - reward), fires the leave signal at the threshold or the
step cap, and on leave samples a geometric return day from the retention
head. Three modes: `request` ends after one step, `whole_session` ends at
leave, `cross_session` chains sessions until the session cap.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import (
    BehaviorSchema, FeedbackBundle, Observation, SlateAction,
    DEFAULT_HISTORY_CAP, DEFAULT_MAX_RETURN_DAY, validate_slate,
)
from .data import LogDataset
from .nn import Mlp, ParamStore
from .uirm import UirmModel, sample_bits

MODES = ("request", "whole_session", "cross_session")


@dataclass(frozen=True)
class EnvConfig:
    mode: str = "whole_session"
    slate_size: int = 20
    max_step: int = 20
    initial_temper: float | None = None   # fixed equal to max_step
    temper_rate: float = 1.0
    leave_threshold: float = 1.0
    max_sessions: int = 10
    max_return_day: int = DEFAULT_MAX_RETURN_DAY
    r_max: float | None = None            # defaults to the schema's positive sum
    hist_cap: int = DEFAULT_HISTORY_CAP
    literal_temper: bool = False          # drain by the reward itself, not (1 - reward)
    retention_reward: str = "mean"        # session reward fed to retention: mean | last

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.slate_size < 1 or self.max_step < 1 or self.max_sessions < 1:
            raise ValueError("slate_size, max_step, max_sessions must be positive")
        if self.initial_temper is not None and self.initial_temper != self.max_step:
            raise ValueError("initial_temper is tied to max_step")
        if self.leave_threshold >= self.start_temper:
            raise ValueError("leave_threshold must be below the initial temper")
        if self.max_return_day < 1:
            raise ValueError("max_return_day must be >= 1")
        if self.retention_reward not in ("mean", "last"):
            raise ValueError("retention_reward must be 'mean' or 'last'")

    @property
    def start_temper(self) -> float:
        return float(self.max_step if self.initial_temper is None else self.initial_temper)

    def resolved_r_max(self, schema: BehaviorSchema) -> float:
        return float(schema.max_step_reward if self.r_max is None else self.r_max)


def reward_func(feedback: np.ndarray, schema: BehaviorSchema,
                r_max: float | None = None) -> tuple[float, float]:
    """(raw, normalized) step reward: mean over positions of the weighted sum."""
    weights = np.asarray(schema.weights, dtype=np.float64)
    r_raw = float((weights @ np.asarray(feedback, dtype=np.float64)).mean())
    denom = schema.max_step_reward if r_max is None else float(r_max)
    return r_raw, r_raw / denom


def update_temper_and_leave(temper: float, step_in_session: int, r_t: float,
                            config: EnvConfig) -> tuple[float, int]:
    """Drain temper and decide the leave bit for the step just taken.

    `step_in_session` counts this step (1-based). By default dissatisfaction
    drains temper: decrement = rate * (1 - r_t), so a fully satisfying step
    leaves temper unchanged. `literal_temper` subtracts the reward itself.
    """
    if config.literal_temper:
        temper = temper - config.temper_rate * r_t
    else:
        temper = temper - config.temper_rate * (1.0 - r_t)
    leave = 1 if (temper <= config.leave_threshold or step_in_session >= config.max_step) else 0
    return temper, leave


class RetentionParams:
    """Return-probability head: personal bias plus response and global biases.

    p_ret = clamp(b_u + lambda1 * session_reward + lambda2 * global_bias),
    where b_u is a sigmoid-headed network of the user state. `frozen_p`
    short-circuits the composition to a fixed probability (diagnostics).
    """

    def __init__(self, state_dim: int, lambda1: float = 0.5, lambda2: float = 0.75,
                 global_bias: float = 0.0, p_min: float = 0.01, p_max: float = 0.99,
                 seed: int = 0, frozen_p: float | None = None):
        if not 0.0 < p_min < p_max < 1.0:
            raise ValueError("need 0 < p_min < p_max < 1")
        self.state_dim = state_dim
        self.lambda1 = float(lambda1)
        self.lambda2 = float(lambda2)
        self.global_bias = float(global_bias)
        self.p_min = float(p_min)
        self.p_max = float(p_max)
        self.frozen_p = frozen_p
        self.store = ParamStore(seed=seed)
        self.head = Mlp(self.store, "ret", (state_dim, 2 * state_dim, 1), out_act="sigmoid")

    def personal_bias(self, states: np.ndarray) -> np.ndarray:
        """b_u for a batch of user states, in (0, 1)."""
        params = {k: self.store[k] for k in self.store.names()}
        out, _ = self.head.forward(params, np.atleast_2d(states))
        return out[:, 0]

    def compose(self, b_u: float, session_reward: float) -> float:
        """Clamped p_ret from an already-computed personal bias."""
        if self.frozen_p is not None:
            return float(self.frozen_p)
        p = b_u + self.lambda1 * session_reward + self.lambda2 * self.global_bias
        return float(np.clip(p, self.p_min, self.p_max))

    def probability(self, states: np.ndarray, session_rewards) -> np.ndarray:
        """Clamped return probability for a batch of session ends."""
        n = np.atleast_2d(states).shape[0]
        if self.frozen_p is not None:
            return np.full(n, self.frozen_p)
        b_u = self.personal_bias(states)
        b_r = self.lambda1 * np.asarray(session_rewards, dtype=np.float64)
        p = b_u + b_r + self.lambda2 * self.global_bias
        return np.clip(p, self.p_min, self.p_max)


def retention_probability(ret: RetentionParams, state: np.ndarray,
                          session_reward: float) -> float:
    return float(ret.probability(state[None], [session_reward])[0])


def sample_return_day(p_ret: float, rng: np.random.Generator,
                      max_day: int = DEFAULT_MAX_RETURN_DAY) -> int:
    """Geometric return-day draw clamped to {1..max_day}."""
    if not 0.0 < p_ret <= 1.0:
        raise ValueError("p_ret must lie in (0, 1]")
    return min(int(rng.geometric(p_ret)), max_day)


@dataclass
class EnvState:
    """Mutable per-lane simulation state."""

    user: int
    temper: float
    step_in_session: int
    session_index: int
    pending_return_day: int
    episode_done: bool
    day: int
    hist_items: np.ndarray
    hist_fb: np.ndarray
    hist_len: int
    session_reward_sum: float
    last_reward: float
    session_returns: tuple[int, ...]
    episode_id: int
    episode_step: int

    def observation(self, dataset: LogDataset) -> Observation:
        return Observation(
            profile=dataset.users.profile(self.user),
            history_items=self.hist_items.copy(),
            history_feedback=self.hist_fb.copy(),
            history_len=self.hist_len,
        )


class TrajectoryLogger:
    """Collects step records; optionally mirrors them to a JSONL file."""

    def __init__(self, path=None):
        self.records: list[dict] = []
        self._fh = open(path, "w") if path is not None else None

    def log(self, record: dict) -> None:
        self.records.append(record)
        if self._fh is not None:
            self._fh.write(json.dumps(record, sort_keys=True) + "\n")

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    @staticmethod
    def load(path) -> list[dict]:
        with open(path) as fh:
            return [json.loads(line) for line in fh if line.strip()]


class BatchRecEnv:
    """n independent simulation lanes stepped with one batched model pass.

    Lane randomness comes from per-lane generators derived from `seed` (or
    the explicit `lane_seeds`), so lanes never share a sampling stream and a
    permutation of the lane seeds permutes the trajectories identically.
    """

    def __init__(self, dataset: LogDataset, model: UirmModel,
                 retention: RetentionParams, config: EnvConfig,
                 n_lanes: int = 1, seed: int = 0,
                 lane_seeds: list[int] | None = None,
                 auto_reset: bool = True, logger: TrajectoryLogger | None = None):
        if dataset.users.n_users == 0:
            raise ValueError("empty user pool")
        if dataset.items.n_items < config.slate_size:
            raise ValueError("catalog smaller than the slate size")
        if retention.state_dim != model.state_dim:
            raise ValueError("retention head width does not match the model state")
        self.dataset = dataset
        self.model = model
        self.retention = retention
        self.config = config
        self.n_lanes = n_lanes
        self.auto_reset = auto_reset
        self.logger = logger
        self.schema = model.schema
        self.r_max = config.resolved_r_max(self.schema)
        if lane_seeds is not None:
            if len(lane_seeds) != n_lanes:
                raise ValueError("lane_seeds length must equal n_lanes")
            self._rngs = [np.random.default_rng(s) for s in lane_seeds]
        else:
            self._rngs = [np.random.default_rng(ss)
                          for ss in np.random.SeedSequence(seed).spawn(n_lanes)]
        self._next_episode = 0
        self.states: list[EnvState] = [self._fresh_state(i) for i in range(n_lanes)]

    # -- lane lifecycle ----------------------------------------------------

    def _fresh_state(self, lane: int) -> EnvState:
        rng = self._rngs[lane]
        user = int(rng.integers(0, self.dataset.users.n_users))
        cap = self.config.hist_cap
        b = self.schema.b
        hist_items = np.zeros(cap, dtype=np.int64)
        hist_fb = np.zeros((cap, b), dtype=np.int8)
        sl = self.dataset.user_slice(user)
        logged_items = self.dataset.item_idx[sl]
        logged_fb = self.dataset.behaviors[sl]
        n = min(cap, logged_items.shape[0])
        if n:
            hist_items[cap - n:] = logged_items[-n:]
            hist_fb[cap - n:] = logged_fb[-n:]
        episode = self._next_episode
        self._next_episode += 1
        return EnvState(
            user=user, temper=self.config.start_temper, step_in_session=0,
            session_index=0, pending_return_day=0, episode_done=False, day=0,
            hist_items=hist_items, hist_fb=hist_fb, hist_len=n,
            session_reward_sum=0.0, last_reward=0.0, session_returns=(),
            episode_id=episode, episode_step=0,
        )

    def reset(self, lanes=None) -> list[Observation]:
        """Resample users for the given lanes (all by default)."""
        targets = range(self.n_lanes) if lanes is None else lanes
        for i in targets:
            self.states[i] = self._fresh_state(i)
        return self.observations()

    def observations(self) -> list[Observation]:
        return [s.observation(self.dataset) for s in self.states]

    def _append_history(self, state: EnvState, item_ids: np.ndarray,
                        bits: np.ndarray) -> None:
        cap = self.config.hist_cap
        items = np.concatenate([state.hist_items, item_ids])[-cap:]
        fb = np.concatenate([state.hist_fb, bits.T.astype(np.int8)])[-cap:]
        state.hist_items = items
        state.hist_fb = fb
        state.hist_len = min(cap, state.hist_len + item_ids.shape[0])

    # -- stepping ------------------------------------------------------------

    def step(self, actions) -> tuple[list[Observation], list[FeedbackBundle],
                                     np.ndarray, list[dict]]:
        """Advance every lane by one request; auto-resets finished lanes."""
        if len(actions) != self.n_lanes:
            raise ValueError(f"expected {self.n_lanes} actions, got {len(actions)}")
        slates = []
        for i, action in enumerate(actions):
            if not isinstance(action, SlateAction):
                action = SlateAction(tuple(int(x) for x in action))
            if self.states[i].episode_done:
                raise RuntimeError("action on a finished episode")
            verdict = validate_slate(action, self.dataset.items, k=self.config.slate_size)
            if verdict is not None:
                raise ValueError(f"invalid slate on lane {i}: {verdict}")
            slates.append(action.as_array())
        slates = np.stack(slates)

        hist_ids = np.stack([s.hist_items for s in self.states])
        hist_fb = np.stack([s.hist_fb for s in self.states])
        hist_len = np.array([s.hist_len for s in self.states])
        profile = self.dataset.users.dense_features[[s.user for s in self.states]]
        states_vec = self.model.state_batch(hist_ids, hist_fb, hist_len, profile)
        probs, _, _ = self.model.likelihood_batch(states_vec, slates)
        b_u = self.retention.personal_bias(states_vec)

        obs_out: list[Observation] = []
        bundles: list[FeedbackBundle] = []
        done = np.zeros(self.n_lanes, dtype=bool)
        infos: list[dict] = []
        cfg = self.config

        for i, state in enumerate(self.states):
            rng = self._rngs[i]
            bits = sample_bits(probs[i], rng, self.schema)
            r_raw, r_t = reward_func(bits, self.schema, self.r_max)

            state.step_in_session += 1
            state.episode_step += 1
            state.session_reward_sum += r_t
            state.last_reward = r_t
            state.temper, leave = update_temper_and_leave(
                state.temper, state.step_in_session, r_t, cfg)
            if cfg.mode == "request":
                leave = 1

            session_of_step = state.session_index
            return_day = 0
            p_ret = None
            if leave:
                if cfg.retention_reward == "mean":
                    session_reward = state.session_reward_sum / state.step_in_session
                else:
                    session_reward = state.last_reward
                p_ret = self.retention.compose(float(b_u[i]), session_reward)
                return_day = sample_return_day(p_ret, rng, cfg.max_return_day)
                state.pending_return_day = return_day

            self._append_history(state, slates[i], bits)

            lane_done = False
            if leave:
                if cfg.mode in ("request", "whole_session"):
                    lane_done = True
                else:
                    state.session_index += 1
                    if state.session_index >= cfg.max_sessions:
                        lane_done = True
                    else:
                        state.session_returns = state.session_returns + (return_day,)
                        state.day += return_day
                        state.temper = cfg.start_temper
                        state.step_in_session = 0
                        state.session_reward_sum = 0.0

            bundle = FeedbackBundle(immediate=bits, leave=leave,
                                    return_day=return_day if leave else 0, reward=r_t)
            info = {
                "episode": state.episode_id,
                "step": state.episode_step,
                "session_index": session_of_step,
                "user": state.user,
                "r_raw": r_raw,
                "reward": r_t,
                "temper": state.temper,
                "leave": leave,
                "return_day": return_day if leave else 0,
                "p_ret": p_ret,
                "day": state.day,
                "session_returns": state.session_returns,
                "done": lane_done,
            }
            if self.logger is not None:
                self.logger.log({
                    "episode": state.episode_id, "step": state.episode_step,
                    "session_index": session_of_step, "user": state.user,
                    "action": [int(x) for x in slates[i]],
                    "feedback": bits.tolist(), "r_raw": r_raw, "reward": r_t,
                    "temper": state.temper, "leave": leave,
                    "return_day": return_day if leave else 0,
                })

            state.episode_done = lane_done
            done[i] = lane_done
            if lane_done and self.auto_reset:
                self.states[i] = self._fresh_state(i)
            obs_out.append(self.states[i].observation(self.dataset))
            infos.append(info)
            bundles.append(bundle)

        return obs_out, bundles, done, infos


class RecEnv:
    """Single-episode view over one simulation lane.

    Unlike the batched form this raises on stepping a finished episode;
    call reset() to start the next one.
    """

    def __init__(self, dataset: LogDataset, model: UirmModel,
                 retention: RetentionParams, config: EnvConfig,
                 seed: int = 0, logger: TrajectoryLogger | None = None):
        self._batch = BatchRecEnv(dataset, model, retention, config, n_lanes=1,
                                  lane_seeds=[seed], auto_reset=False, logger=logger)

    @property
    def config(self) -> EnvConfig:
        return self._batch.config

    @property
    def state(self) -> EnvState:
        return self._batch.states[0]

    def reset(self) -> Observation:
        return self._batch.reset()[0]

    def step(self, action: SlateAction):
        obs, bundles, done, infos = self._batch.step([action])
        return obs[0], bundles[0], bool(done[0]), infos[0]


def random_slate(rng: np.random.Generator, n_items: int, k: int) -> SlateAction:
    """K distinct uniformly random items."""
    ids = rng.choice(n_items, size=k, replace=False)
    return SlateAction(tuple(int(x) for x in ids))


def fit_global_bias(dataset: LogDataset, model: UirmModel, retention: RetentionParams,
                    config: EnvConfig, target_mean_return_day: float,
                    n_sessions: int = 2000, n_lanes: int = 32, seed: int = 0,
                    tol: float = 0.05, lo: float = -1.5, hi: float = 1.5,
                    max_iter: int = 25) -> float:
    """Bisection on the global retention bias until the simulated mean return
    day under a random policy matches the target.

    The mean return day is monotone non-increasing in the bias; every probe
    uses the same seeds, so the fit is deterministic. Sets
    `retention.global_bias` in place and returns the achieved mean.
    """

    probe_cfg = EnvConfig(
        mode="whole_session", slate_size=config.slate_size, max_step=config.max_step,
        temper_rate=config.temper_rate, leave_threshold=config.leave_threshold,
        max_return_day=config.max_return_day, r_max=config.r_max,
        hist_cap=config.hist_cap, literal_temper=config.literal_temper,
        retention_reward=config.retention_reward)

    def simulate(bias: float) -> float:
        retention.global_bias = bias
        env = BatchRecEnv(dataset, model, retention, probe_cfg, n_lanes=n_lanes,
                          seed=seed, auto_reset=True)
        policy_rng = np.random.default_rng(seed + 1)
        days: list[int] = []
        while len(days) < n_sessions:
            actions = [random_slate(policy_rng, dataset.items.n_items, probe_cfg.slate_size)
                       for _ in range(n_lanes)]
            _, bundles, _, _ = env.step(actions)
            days.extend(b.return_day for b in bundles if b.leave)
        return float(np.mean(days[:n_sessions]))

    achieved = simulate((lo + hi) / 2.0)
    for _ in range(max_iter):
        if abs(achieved - target_mean_return_day) <= tol:
            break
        if achieved > target_mean_return_day:
            lo = retention.global_bias
        else:
            hi = retention.global_bias
        achieved = simulate((lo + hi) / 2.0)
    return achieved
