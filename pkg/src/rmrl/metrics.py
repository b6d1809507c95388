"""Run evaluation: threshold-crossing convergence step, reward summaries, EMA
smoothing, and greedy-policy evaluation on fresh scenes."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import geometry
from . import policy as pol
from .env import PickPlaceEnv
from .policy import PolicyParams

NOT_REACHED = "not-reached"


def t_tau_10(trace, tau: float, occurrences: int = 10) -> int | None:
    """1-based step of the tenth strict exceedance of ``tau``; None if never reached."""
    hits = np.flatnonzero(np.asarray(trace, dtype=np.float64) > tau)
    if hits.size < occurrences:
        return None
    return int(hits[occurrences - 1]) + 1


def ema(trace, alpha: float) -> np.ndarray:
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    trace = np.asarray(trace, dtype=np.float64)
    out = np.empty_like(trace)
    s = 0.0
    for t, r in enumerate(trace):
        s = r if t == 0 else alpha * r + (1.0 - alpha) * s
        out[t] = s
    return out


def summarize(trace) -> tuple[float, float]:
    """Mean and population standard deviation."""
    trace = np.asarray(trace, dtype=np.float64)
    if trace.size == 0:
        raise ValueError("cannot summarize an empty trace")
    return float(trace.mean()), float(trace.std())


@dataclass(frozen=True)
class Evaluation:
    rewards: np.ndarray
    e_trans: np.ndarray  # meters
    e_rot: np.ndarray  # absolute yaw error, radians
    success: np.ndarray

    @property
    def mean_reward(self) -> float:
        return float(self.rewards.mean())

    @property
    def e_trans_mm(self) -> float:
        return float(self.e_trans.mean() * 1000.0)

    @property
    def e_rot_deg(self) -> float:
        return float(np.degrees(self.e_rot.mean()))

    @property
    def success_rate(self) -> float:
        return float(self.success.mean())


def evaluate_chooser(
    choose,
    env: PickPlaceEnv,
    n_scenes: int,
    rng: np.random.Generator,
    success_trans_mm: float = 3.0,
    success_rot_deg: float = 1.0,
) -> Evaluation:
    """Run ``choose(scene, observation) -> ActionIndex`` once on each of
    ``n_scenes`` fresh scenes.

    A trial succeeds when the translation error is at most ``success_trans_mm``
    and the absolute yaw error at most ``success_rot_deg``.
    """
    if n_scenes < 1:
        raise ValueError("n_scenes must be >= 1")
    rewards, e_trans, e_rot = [], [], []
    for i in range(n_scenes):
        scene = env.new_scene(rng, i)
        obs = env.observe(scene, rng)
        outcome = env.step(scene, obs, choose(scene, obs), rng)
        rewards.append(outcome.reward)
        e_trans.append(geometry.translation_error(outcome.final_pose, scene.target))
        e_rot.append(geometry.angular_difference(outcome.final_pose, scene.target))
    e_trans, e_rot = np.array(e_trans), np.array(e_rot)
    success = (e_trans * 1000.0 <= success_trans_mm) & (np.degrees(e_rot) <= success_rot_deg)
    return Evaluation(np.array(rewards), e_trans, e_rot, success)


def evaluate_policy(
    params: PolicyParams,
    env: PickPlaceEnv,
    n_scenes: int,
    rng: np.random.Generator,
    success_trans_mm: float = 3.0,
    success_rot_deg: float = 1.0,
    *,
    greedy: bool = True,
) -> Evaluation:
    """Evaluate the policy without learning, by per-head argmax unless ``greedy`` is off."""

    def choose(scene, obs):
        dist = pol.forward(params, obs)
        return dist.argmax() if greedy else pol.sample(dist, rng)

    return evaluate_chooser(choose, env, n_scenes, rng, success_trans_mm, success_rot_deg)


@dataclass(frozen=True)
class MetricReport:
    t_tau_10: int | None
    avg_reward: float
    std_reward: float
    eval_reward: float
    e_trans_mm: float
    e_rot_deg: float
    success_rate: float

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["t_tau_10"] is None:
            d["t_tau_10"] = NOT_REACHED
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MetricReport":
        d = dict(d)
        if d["t_tau_10"] == NOT_REACHED:
            d["t_tau_10"] = None
        return cls(**d)


def build_report(trace, evaluation: Evaluation, tau: float) -> MetricReport:
    mean, std = summarize(trace)
    return MetricReport(
        t_tau_10=t_tau_10(trace, tau),
        avg_reward=mean,
        std_reward=std,
        eval_reward=evaluation.mean_reward,
        e_trans_mm=evaluation.e_trans_mm,
        e_rot_deg=evaluation.e_rot_deg,
        success_rate=evaluation.success_rate,
    )


def t_tau_sort_key(value: int | None) -> float:
    return math.inf if value is None else float(value)


def median_t_tau(values) -> float:
    """Median with not-reached counted as +inf."""
    return float(np.median([t_tau_sort_key(v) for v in values]))
