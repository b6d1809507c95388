import json
import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rmrl import datasets as ds
from rmrl import policy as pol
from rmrl.config import ActionGrid
from rmrl.datasets import FormatError
from rmrl.env import Observation
from rmrl.geometry import PlanarPose
from rmrl.learn import LabeledRecord
from rmrl.policy import PolicyArchitecture

GRID = ActionGrid()
FDIM = 16


def make_records(n, rng, scene_len=5):
    recs = []
    for k in range(n):
        obs = Observation(PlanarPose(*rng.normal(0, 0.01, 3)), rng.normal(size=FDIM))
        label = tuple(int(v) for v in rng.integers(0, GRID.sizes))
        action = tuple(int(v) for v in rng.integers(0, GRID.sizes))
        recs.append(LabeledRecord(obs, label, k // scene_len, k % scene_len, action, float(rng.uniform(0.5, 1))))
    return recs


def assert_records_equal(a, b):
    assert len(a) == len(b)
    for x, y in zip(a, b):
        assert x == y
        assert x.observation.feature.tobytes() == y.observation.feature.tobytes()


def test_empty_dataset_round_trip(tmp_path):
    path = tmp_path / "d.jsonl"
    ds.write_dataset(path, [], GRID, FDIM)
    assert len(path.read_text().splitlines()) == 1
    grid, fdim, recs = ds.read_dataset(path)
    assert grid == GRID and fdim == FDIM and recs == []


def test_dataset_round_trip_300(tmp_path, rng):
    recs = make_records(300, rng)
    path = tmp_path / "d.jsonl"
    ds.write_dataset(path, recs, GRID, FDIM)
    grid, fdim, back = ds.read_dataset(path, expected_grid=GRID)
    assert grid == GRID and fdim == FDIM
    assert_records_equal(recs, back)


floats = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=50, deadline=None)
@given(
    pose=st.lists(floats, min_size=3, max_size=3),
    feature=st.lists(floats, min_size=FDIM, max_size=FDIM),
    reward=floats,
)
def test_dataset_round_trip_is_bit_exact(tmp_path_factory, pose, feature, reward):
    path = tmp_path_factory.mktemp("rt") / "d.jsonl"
    rec = LabeledRecord(Observation(PlanarPose(*pose), np.array(feature)), (1, 2, 3), 0, 0, (4, 5, 6), reward)
    ds.write_dataset(path, [rec], GRID, FDIM)
    assert_records_equal([rec], ds.read_dataset(path)[2])


def test_corrupted_line_is_named(tmp_path, rng):
    path = tmp_path / "d.jsonl"
    ds.write_dataset(path, make_records(10, rng), GRID, FDIM)
    lines = path.read_text().splitlines()
    lines[6] = lines[6][:25]
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(FormatError, match="line 7"):
        ds.read_dataset(path)


def test_dataset_grid_and_version_checks(tmp_path, rng):
    path = tmp_path / "d.jsonl"
    ds.write_dataset(path, make_records(3, rng), GRID, FDIM)
    with pytest.raises(FormatError, match="grid"):
        ds.read_dataset(path, expected_grid=ActionGrid(n_psi=7))
    lines = path.read_text().splitlines()
    header = json.loads(lines[0])
    header["version"] = 2
    path.write_text("\n".join([json.dumps(header)] + lines[1:]))
    with pytest.raises(FormatError, match="version"):
        ds.read_dataset(path)


def test_label_outside_header_grid_rejected(tmp_path, rng):
    path = tmp_path / "d.jsonl"
    ds.write_dataset(path, make_records(2, rng), GRID, FDIM)
    lines = path.read_text().splitlines()
    rec = json.loads(lines[2])
    rec["label"] = [11, 0, 0]
    lines[2] = json.dumps(rec)
    path.write_text("\n".join(lines))
    with pytest.raises(FormatError, match="line 3"):
        ds.read_dataset(path)


def test_append_scene(tmp_path, rng):
    path = tmp_path / "d.jsonl"
    writer = ds.DatasetWriter(path, GRID, FDIM)
    recs = make_records(15, rng)
    for i in range(3):
        writer.append_scene(recs[i * 5:(i + 1) * 5])
        # earlier records are never touched by later appends
        assert_records_equal(ds.read_dataset(path)[2], recs[:(i + 1) * 5])
    writer.append_scene([])
    assert len(writer) == 15
    assert_records_equal(ds.read_dataset(path)[2], recs)


def test_append_is_atomic_for_concurrent_readers(tmp_path, rng):
    path = tmp_path / "d.jsonl"
    writer = ds.DatasetWriter(path, GRID, FDIM)
    recs = make_records(15, rng)
    seen = set()
    done = threading.Event()

    def reader():
        while not done.is_set():
            seen.add(len(ds.read_dataset(path)[2]))

    t = threading.Thread(target=reader)
    t.start()
    try:
        for _ in range(20):
            writer = ds.DatasetWriter(path, GRID, FDIM)
            for i in range(3):
                writer.append_scene(recs[i * 5:(i + 1) * 5])
    finally:
        done.set()
        t.join()
    assert seen <= {0, 5, 10, 15}
    assert len(seen) > 1


ARCH = PolicyArchitecture(19, (64, 64), (11, 11, 9), pose_scale=(0.01, 0.01, 0.0698))


def test_checkpoint_round_trip(tmp_path, rng):
    params = pol.init_params(ARCH, rng, scale=0.3)
    path = tmp_path / "p.bin"
    ds.write_checkpoint(path, params, GRID, seed=42)
    back, grid, seed = ds.read_checkpoint(path, expected_grid=GRID, expected_arch=ARCH)
    assert seed == 42 and grid == GRID and back.arch == ARCH
    assert back.vector.tobytes() == params.vector.tobytes()
    obs = Observation(PlanarPose(0.003, -0.001, 0.02), rng.normal(size=FDIM))
    for p, q in zip(pol.forward(params, obs).probs, pol.forward(back, obs).probs):
        assert p.tobytes() == q.tobytes()


def test_checkpoint_grid_mismatch(tmp_path, rng):
    path = tmp_path / "p.bin"
    ds.write_checkpoint(path, pol.init_params(ARCH, rng), GRID, seed=0)
    with pytest.raises(FormatError, match="grid"):
        ds.read_checkpoint(path, expected_grid=ActionGrid(n_psi=7))
    with pytest.raises(FormatError, match="architecture"):
        ds.read_checkpoint(path, expected_arch=PolicyArchitecture(19, (32,), (11, 11, 9)))


def test_checkpoint_version_and_truncation(tmp_path, rng):
    path = tmp_path / "p.bin"
    ds.write_checkpoint(path, pol.init_params(ARCH, rng), GRID, seed=0)
    blob = path.read_bytes()
    path.write_bytes(blob[:-8])
    with pytest.raises(FormatError, match="truncated"):
        ds.read_checkpoint(path)
    head, _, body = blob.partition(b"\n")
    header = json.loads(head)
    header["format_version"] = 2
    path.write_bytes(json.dumps(header).encode() + b"\n" + body)
    with pytest.raises(FormatError, match="unsupported checkpoint version"):
        ds.read_checkpoint(path)
    path.write_bytes(head)
    with pytest.raises(FormatError, match="truncated"):
        ds.read_checkpoint(path)


def test_trace_round_trip(tmp_path, rng):
    rewards = rng.uniform(0.9, 1, size=12)
    ema = rng.uniform(0.9, 1, size=12)
    phases = ["online"] * 11 + ["offline_replay"]
    path = tmp_path / "t.csv"
    ds.write_trace(path, rewards, np.repeat(np.arange(4), 3), phases, ema)
    back = ds.read_trace(path)
    assert back["step"] == list(range(1, 13))
    assert back["reward"] == list(rewards) and back["ema_reward"] == list(ema)
    assert back["phase"] == phases
    assert path.read_text().splitlines()[0] == "step,scene_id,reward,ema_reward,phase"
