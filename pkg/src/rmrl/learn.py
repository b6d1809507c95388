"""Training procedures: standard policy gradient, policy gradient with a replay
buffer, role-model RL, and role-model RL from a pretrained initialization.

All randomness comes from ``RunStreams``, which splits the run seed into
independent generators per purpose. Methods that share the online loop
therefore see identical scenes and action draws until their parameters
diverge.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import policy as pol
from .config import METHODS, RunConfig
from .env import ActionIndex, Observation, PickPlaceEnv, SceneSpec, StepOutcome
from .policy import PolicyArchitecture, PolicyParams

PHASE_ONLINE = "online"
PHASE_OFFLINE_SCENE = "offline_scene"
PHASE_OFFLINE_REPLAY = "offline_replay"


class RunStreams:
    """Independent generators derived from one run seed."""

    NAMES = ("world", "scenes", "actions", "init", "offline", "replay", "pretrain", "eval")

    def __init__(self, seed: int):
        self.seed = int(seed)
        children = np.random.SeedSequence(self.seed).spawn(len(self.NAMES))
        self.sequences = dict(zip(self.NAMES, children))
        # "world" seeds the env's feature projection and is consumed there
        for name in self.NAMES[1:]:
            setattr(self, name, np.random.default_rng(self.sequences[name]))


def make_env(config: RunConfig, streams: RunStreams) -> PickPlaceEnv:
    return PickPlaceEnv(config.env, streams.sequences["world"])


def make_architecture(config: RunConfig) -> PolicyArchitecture:
    grid = config.env.grid
    return PolicyArchitecture(
        input_dim=3 + config.env.feature_dim,
        hidden_dims=tuple(config.policy.hidden_dims),
        head_sizes=grid.sizes,
        activation=config.policy.activation,
        pose_scale=tuple(h if h > 0 else 1.0 for h in grid.half_ranges),
    )


@dataclass
class SceneLog:
    scene_id: int
    steps: list[StepOutcome] = field(default_factory=list)

    def add(self, outcome: StepOutcome):
        if outcome.scene_id != self.scene_id:
            raise ValueError(f"step from scene {outcome.scene_id} added to scene {self.scene_id}")
        self.steps.append(outcome)


@dataclass(frozen=True)
class LabeledRecord:
    observation: Observation
    label: ActionIndex
    scene_id: int = -1
    step: int = -1
    action: ActionIndex | None = None
    reward: float | None = None


@dataclass(frozen=True)
class ReplayTransition:
    observation: Observation
    action: ActionIndex
    reward: float
    inserted_at: int


class ReplayBuffer:
    """FIFO buffer; sampling is uniform with replacement."""

    def __init__(self, capacity: int):
        self.capacity = int(capacity)
        self._items: deque[ReplayTransition] = deque(maxlen=max(self.capacity, 1))

    def __len__(self):
        return len(self._items) if self.capacity > 0 else 0

    def add(self, transition: ReplayTransition):
        if self.capacity > 0:
            self._items.append(transition)

    def sample(self, batch: int, rng: np.random.Generator) -> list[ReplayTransition]:
        """Draw ``batch`` transitions; a buffer smaller than ``batch`` is returned whole."""
        n = len(self)
        if n == 0:
            return []
        if n <= batch:
            return list(self._items)
        idx = rng.integers(0, n, size=batch)
        return [self._items[i] for i in idx]


@dataclass
class RunResult:
    method: str
    seed: int
    rewards: np.ndarray
    scene_ids: np.ndarray
    phases: list[str]
    outcomes: list[StepOutcome]
    params: PolicyParams
    initial_params: PolicyParams
    dataset: list[LabeledRecord]
    counters: dict[str, int]


def select_role_model(log: SceneLog) -> ActionIndex:
    """Action of the highest-reward step; the earliest step wins ties."""
    if not log.steps:
        raise ValueError(f"scene {log.scene_id} has no steps to select a role model from")
    best = 0
    for k, outcome in enumerate(log.steps):
        if outcome.reward > log.steps[best].reward:
            best = k
    return log.steps[best].action_index


def label_scene(log: SceneLog) -> list[LabeledRecord]:
    label = select_role_model(log)
    return [
        LabeledRecord(o.observation, label, log.scene_id, k, o.action_index, o.reward)
        for k, o in enumerate(log.steps)
    ]


def online_step(
    params: PolicyParams,
    env: PickPlaceEnv,
    scene: SceneSpec,
    streams: RunStreams,
    lr: float,
) -> tuple[PolicyParams, StepOutcome]:
    obs = env.observe(scene, streams.scenes)
    action = pol.sample(pol.forward(params, obs), streams.actions)
    outcome = env.step(scene, obs, action, streams.scenes)
    if lr != 0:
        grad = pol.pg_gradient(params, obs, action, outcome.reward)
        params = pol.apply_update(params, grad, lr)
    return params, outcome


def offline_batches(n: int, epochs: int, batch: int, rng: np.random.Generator):
    """Yield index arrays: ``epochs`` shuffled passes over ``n`` items in chunks of ``batch``."""
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch):
            yield order[start:start + batch]


def n_offline_steps(n_records: int, epochs: int, batch: int) -> int:
    return epochs * math.ceil(n_records / batch)


def offline_train(
    params: PolicyParams,
    records: list[LabeledRecord],
    epochs: int,
    batch: int,
    lr: float,
    rng: np.random.Generator,
    *,
    losses: list[float] | None = None,
) -> tuple[PolicyParams, int]:
    """Minibatch cross-entropy SGD on role-model labels.

    Returns the new parameters and the number of gradient steps taken. When
    ``losses`` is given, the mean batch loss of each epoch is appended to it.
    """
    if not records:
        raise ValueError("offline_train needs at least one record")
    if epochs <= 0:
        return params, 0
    X = pol.encode_batch([r.observation for r in records], params.arch)
    Y = np.array([r.label for r in records], dtype=np.int64)
    steps_per_epoch = math.ceil(len(records) / batch)
    steps, epoch_loss = 0, 0.0
    for idx in offline_batches(len(records), epochs, batch, rng):
        loss, grad = pol.batch_ce_gradient(params, X[idx], Y[idx])
        params = pol.apply_update(params, grad, lr)
        steps += 1
        epoch_loss += loss
        if steps % steps_per_epoch == 0:
            if losses is not None:
                losses.append(epoch_loss / steps_per_epoch)
            epoch_loss = 0.0
    return params, steps


def mean_ce_loss(params: PolicyParams, records: list[LabeledRecord]) -> float:
    X = pol.encode_batch([r.observation for r in records], params.arch)
    Y = np.array([r.label for r in records], dtype=np.int64)
    return pol.batch_ce_gradient(params, X, Y)[0]


def _initial_params(config: RunConfig, streams: RunStreams, init: PolicyParams | None) -> PolicyParams:
    arch = make_architecture(config)
    fresh = pol.init_params(arch, streams.init, config.policy.init_scale, config.policy.trunk_init)
    if init is None:
        return fresh
    if init.arch != arch:
        raise ValueError(f"initial parameters have architecture {init.arch}, run expects {arch}")
    return init


def _run_online(
    method: str,
    config: RunConfig,
    *,
    role_model: bool,
    replay_capacity: int = 0,
    init: PolicyParams | None = None,
    streams: RunStreams | None = None,
    on_scene_labeled=None,
) -> RunResult:
    """Shared online loop; role-model labeling and replay switch on per method.

    ``on_scene_labeled(records)`` is called once per labeled scene, before the
    scene's offline training, e.g. to append it to a dataset file.
    """
    config.validate()
    sched = config.schedule
    streams = streams or RunStreams(config.seed)
    env = make_env(config, streams)
    params = _initial_params(config, streams, init)
    initial = params
    buffer = ReplayBuffer(replay_capacity)
    dataset: list[LabeledRecord] = []
    outcomes: list[StepOutcome] = []
    phases: list[str] = []
    counters = {"online": 0, "replay": 0, "offline_scene": 0, "offline_replay": 0}
    t = 0
    for scene_id in range(sched.total_scenes):
        scene = env.new_scene(streams.scenes, scene_id)
        log = SceneLog(scene_id)
        for _ in range(sched.steps_per_scene):
            params, outcome = online_step(params, env, scene, streams, sched.lr_online)
            counters["online"] += 1
            if replay_capacity > 0:
                batch = buffer.sample(sched.replay_batch, streams.replay)
                if batch:
                    X = pol.encode_batch([tr.observation for tr in batch], params.arch)
                    _, grad = pol.batch_pg_gradient(
                        params, X, [tr.action for tr in batch], [tr.reward for tr in batch]
                    )
                    params = pol.apply_update(params, grad, sched.lr_online)
                    counters["replay"] += 1
                buffer.add(ReplayTransition(outcome.observation, outcome.action_index, outcome.reward, t))
            log.add(outcome)
            outcomes.append(outcome)
            phases.append(PHASE_ONLINE)
            t += 1
        if role_model:
            records = label_scene(log)
            dataset.extend(records)
            if on_scene_labeled is not None:
                on_scene_labeled(records)
            params, n = offline_train(
                params, records, sched.offline_epochs_scene, sched.replay_batch,
                sched.lr_offline, streams.offline,
            )
            counters["offline_scene"] += n
            phases[-1] = PHASE_OFFLINE_SCENE
            if (scene_id + 1) % sched.replay_interval == 0:
                params, n = offline_train(
                    params, dataset, sched.replay_epochs, sched.replay_batch,
                    sched.lr_offline, streams.offline,
                )
                counters["offline_replay"] += n
                phases[-1] = PHASE_OFFLINE_REPLAY
    return RunResult(
        method=method,
        seed=streams.seed,
        rewards=np.array([o.reward for o in outcomes]),
        scene_ids=np.array([o.scene_id for o in outcomes], dtype=np.int64),
        phases=phases,
        outcomes=outcomes,
        params=params,
        initial_params=initial,
        dataset=dataset,
        counters=counters,
    )


def expected_offline_steps(config: RunConfig) -> dict[str, int]:
    """Closed-form count of offline gradient steps in a role-model run."""
    s = config.schedule
    K, B = s.steps_per_scene, s.replay_batch
    scene = s.total_scenes * n_offline_steps(K, s.offline_epochs_scene, B)
    replay = sum(
        n_offline_steps(j * s.replay_interval * K, s.replay_epochs, B)
        for j in range(1, s.total_scenes // s.replay_interval + 1)
    )
    return {"offline_scene": scene, "offline_replay": replay}


def run_standard_rl(config: RunConfig, init: PolicyParams | None = None) -> RunResult:
    return _run_online("standard", config, role_model=False, init=init)


def run_replay_buffer_rl(config: RunConfig, init: PolicyParams | None = None) -> RunResult:
    return _run_online(
        "replay", config, role_model=False, replay_capacity=config.schedule.replay_capacity, init=init
    )


def run_rm_rl(config: RunConfig, init: PolicyParams | None = None, on_scene_labeled=None) -> RunResult:
    return _run_online("rmrl", config, role_model=True, init=init, on_scene_labeled=on_scene_labeled)


def generate_pretrain_dataset(
    env: PickPlaceEnv, config: RunConfig, rng: np.random.Generator, n_samples: int | None = None
) -> list[LabeledRecord]:
    """Role-model-labeled records from scripted scenes.

    Each scripted scene makes ``steps_per_scene`` tries at the noise-free
    optimal action jittered by up to ``pretrain_jitter`` grid cells per axis;
    the best try becomes the scene label, as in a careful earlier round of
    experiments. Only the first ``pretrain_records_per_scene`` labeled steps
    are kept, since distinct initial states carry most of the information.
    Scene ids are negative so they never collide with online scenes.
    """
    sched = config.schedule
    n_samples = sched.pretrain_samples if n_samples is None else int(n_samples)
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    sizes = np.array(env.grid.sizes)
    j = sched.pretrain_jitter
    keep = min(sched.pretrain_records_per_scene, sched.steps_per_scene)
    records: list[LabeledRecord] = []
    scene_id = -1
    while len(records) < n_samples:
        scene = env.new_scene(rng, scene_id)
        best = np.array(env.best_grid_action(scene))
        log = SceneLog(scene_id)
        for _ in range(sched.steps_per_scene):
            action = np.clip(best + rng.integers(-j, j + 1, size=3), 0, sizes - 1)
            obs = env.observe(scene, rng)
            log.add(env.step(scene, obs, tuple(int(a) for a in action), rng))
        records.extend(label_scene(log)[:keep])
        scene_id -= 1
    return records[:n_samples]


def pretrain(
    config: RunConfig,
    dataset: list[LabeledRecord],
    streams: RunStreams,
    *,
    epochs: int | None = None,
) -> PolicyParams:
    """Supervised training from a fresh initialization on a labeled dataset."""
    if not dataset:
        raise ValueError("pretraining dataset is empty")
    sched = config.schedule
    params = pol.init_params(
        make_architecture(config), streams.init, config.policy.init_scale, config.policy.trunk_init
    )
    epochs = sched.pretrain_epochs if epochs is None else epochs
    params, _ = offline_train(params, dataset, epochs, sched.replay_batch, sched.lr_pretrain, streams.pretrain)
    return params


def run_pretrained_rm_rl(
    config: RunConfig,
    init: PolicyParams | None = None,
    dataset: list[LabeledRecord] | None = None,
    on_scene_labeled=None,
) -> RunResult:
    """Role-model RL started from a pretrained policy.

    Without ``init``, pretraining data is generated from scripted scenes in the
    run's own world and a policy is pretrained on it first.
    """
    streams = RunStreams(config.seed)
    if init is None:
        if dataset is None:
            env = make_env(config, streams)
            dataset = generate_pretrain_dataset(env, config, streams.pretrain)
        init = pretrain(config, dataset, streams)
    return _run_online(
        "pretrained-rmrl", config, role_model=True, init=init, streams=streams,
        on_scene_labeled=on_scene_labeled,
    )


def run_method(
    method: str, config: RunConfig, init: PolicyParams | None = None, on_scene_labeled=None
) -> RunResult:
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    runner = {
        "standard": run_standard_rl,
        "replay": run_replay_buffer_rl,
        "rmrl": run_rm_rl,
        "pretrained-rmrl": run_pretrained_rm_rl,
    }[method]
    if method in ("rmrl", "pretrained-rmrl"):
        return runner(config, init=init, on_scene_labeled=on_scene_labeled)
    return runner(config, init=init)
