import numpy as np
import pytest

from rmrl.config import RunConfig


def quiet_config(**sections) -> RunConfig:
    """Default config with every noise source switched off, plus overrides."""
    env = {
        "sigma_obs_trans": 0.0, "sigma_obs_rot": 0.0,
        "sigma_exec_trans": 0.0, "sigma_exec_rot": 0.0, "sigma_feat": 0.0,
    }
    env.update(sections.pop("env", {}))
    return RunConfig().replace(env=env, **sections)


def small_config(**sections) -> RunConfig:
    """Tiny network and short schedule for fast training-loop tests."""
    base = {
        "policy": {"hidden_dims": (16,)},
        "schedule": {"total_scenes": 6, "replay_interval": 3, "pretrain_samples": 20, "pretrain_epochs": 5},
        "env": {"feature_dim": 4},
    }
    for key, value in sections.items():
        if isinstance(value, dict):
            base.setdefault(key, {}).update(value)
        else:
            base[key] = value
    return RunConfig().replace(**base)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
