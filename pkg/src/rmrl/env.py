"""Simulated one-step pick-and-place task.

Each scene carries a hidden systematic perception bias: the estimated pick
pose is offset from the true plate pose by ``bias``. Picking at
``estimate + action`` therefore lands the plate at ``target + bias + action``
(plus noise), and the policy has to learn ``action ~ -bias`` from the
observation. The observation carries the noisy estimated pose and a synthetic
feature vector ``W @ (bias / half_range) + noise`` standing in for an image
embedding.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import geometry
from .config import EnvConfig
from .geometry import PlanarPose

ActionIndex = tuple[int, int, int]


@dataclass(frozen=True)
class SceneSpec:
    scene_id: int
    bias: PlanarPose
    target: PlanarPose


@dataclass(frozen=True)
class Observation:
    est_pose: PlanarPose
    feature: np.ndarray

    def __post_init__(self):
        feature = np.asarray(self.feature, dtype=np.float64)
        if feature.ndim != 1 or not np.all(np.isfinite(feature)):
            raise ValueError("feature must be a finite 1-D vector")
        feature.setflags(write=False)
        object.__setattr__(self, "feature", feature)

    def __eq__(self, other):
        if not isinstance(other, Observation):
            return NotImplemented
        return self.est_pose == other.est_pose and np.array_equal(self.feature, other.feature)

    __hash__ = None


@dataclass(frozen=True)
class StepOutcome:
    scene_id: int
    observation: Observation
    action_index: ActionIndex
    final_pose: PlanarPose
    reward: float


class PickPlaceEnv:
    """Holds the task configuration and the fixed feature projection ``W``.

    All randomness beyond ``W`` comes from the generator passed to each call,
    so a run decides how to split its streams.
    """

    def __init__(self, config: EnvConfig, seed: int | np.random.SeedSequence = 0):
        config.validate()
        self.config = config
        self.grid = config.grid
        self.grid_values = config.grid.values()
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        w_rng = np.random.default_rng(ss)
        self.W = w_rng.standard_normal((config.feature_dim, 3)) / np.sqrt(3.0)
        self.target = PlanarPose(*config.target)
        self._bias_scale = np.array(
            [h if h > 0 else 1.0 for h in config.grid.half_ranges], dtype=np.float64
        )

    @property
    def feature_dim(self) -> int:
        return self.config.feature_dim

    def new_scene(self, rng: np.random.Generator, scene_id: int = 0) -> SceneSpec:
        half = np.asarray(self.config.bias_half_ranges, dtype=np.float64)
        bias = rng.uniform(-1.0, 1.0, size=3) * half
        return SceneSpec(scene_id, PlanarPose.from_array(bias), self.target)

    def observe(self, scene: SceneSpec, rng: np.random.Generator) -> Observation:
        cfg = self.config
        noise = rng.standard_normal(3) * np.array(
            [cfg.sigma_obs_trans, cfg.sigma_obs_trans, cfg.sigma_obs_rot]
        )
        est = PlanarPose(
            scene.target.x + scene.bias.x + noise[0],
            scene.target.y + scene.bias.y + noise[1],
            geometry.wrap_angle(scene.target.psi + scene.bias.psi + noise[2]),
        )
        feat_noise = rng.standard_normal(cfg.feature_dim) * cfg.sigma_feat
        feature = self.W @ (scene.bias.as_array() / self._bias_scale) + feat_noise
        return Observation(est, feature)

    def action_delta(self, action_index: ActionIndex) -> PlanarPose:
        self.check_action(action_index)
        return PlanarPose(*(float(v[i]) for v, i in zip(self.grid_values, action_index)))

    def check_action(self, action_index):
        if len(action_index) != 3:
            raise ValueError(f"action index must have three components, got {action_index!r}")
        for i, n, name in zip(action_index, self.grid.sizes, ("x", "y", "psi")):
            if not (0 <= int(i) < n) or int(i) != i:
                raise IndexError(f"action index {name}={i} outside grid of size {n}")

    def step(
        self,
        scene: SceneSpec,
        observation: Observation,
        action_index: ActionIndex,
        rng: np.random.Generator,
    ) -> StepOutcome:
        """Execute the pick at ``estimate + action`` and score the placement.

        The grasp offset relative to the true plate pose is carried to the
        target by the fixed placement motion, plus execution noise.
        """
        cfg = self.config
        action_index = tuple(int(i) for i in action_index)
        pick = geometry.compose_pick_pose(observation.est_pose, self.action_delta(action_index))
        eta = rng.standard_normal(3) * np.array(
            [cfg.sigma_exec_trans, cfg.sigma_exec_trans, cfg.sigma_exec_rot]
        )
        # true plate starts at the target pose, so the grasp offset is pick - target
        final = PlanarPose(
            pick.x + eta[0], pick.y + eta[1], geometry.wrap_angle(pick.psi + eta[2])
        )
        return StepOutcome(
            scene.scene_id, observation, action_index, final, geometry.reward(final, scene.target)
        )

    def noiseless_error(self, scene: SceneSpec, action_index: ActionIndex) -> tuple[float, float]:
        """(e_trans, e_rot) of an action with all noise switched off."""
        est = PlanarPose(
            scene.target.x + scene.bias.x,
            scene.target.y + scene.bias.y,
            geometry.wrap_angle(scene.target.psi + scene.bias.psi),
        )
        final = geometry.compose_pick_pose(est, self.action_delta(action_index))
        return geometry.translation_error(final, scene.target), geometry.rotation_error(final, scene.target)

    def best_grid_action(self, scene: SceneSpec) -> ActionIndex:
        """Noise-free optimal grid action; ties go to the smallest index.

        Translation error is monotone in each of |dx|, |dy| separately and
        rotation error depends on the yaw only, so the joint optimum is the
        per-axis nearest grid point.
        """
        gx, gy, gpsi = self.grid_values
        ix = int(np.argmin(np.abs(scene.bias.x + gx)))
        iy = int(np.argmin(np.abs(scene.bias.y + gy)))
        ang = np.array([geometry.wrap_angle(scene.bias.psi + g) for g in gpsi])
        ipsi = int(np.argmin(1.0 - np.cos(ang)))
        return (ix, iy, ipsi)

    def all_actions(self):
        return itertools.product(*(range(n) for n in self.grid.sizes))
