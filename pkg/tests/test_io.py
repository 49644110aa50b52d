import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qsde.io import (
    MAGIC,
    InputError,
    parse_timestamp,
    read_kv,
    read_series,
    read_ticks,
    read_trajectory,
    trajectory_header,
    write_kv,
    write_series,
    write_trajectory,
    write_trajectory_stream,
)
from qsde.sde import SdeParams, SolverConfig, Trajectory, iter_chunks, simulate

P = SdeParams(2.5, 3.6, 0.01)
CFG = SolverConfig(burn_in=100, max_steps=3000, seed=17)


@pytest.fixture(scope="module")
def traj():
    return simulate(P, CFG)


@pytest.mark.parametrize("fmt", ["bin", "csv"])
def test_trajectory_round_trip(tmp_path, traj, fmt):
    path = tmp_path / f"t.{fmt}"
    assert write_trajectory(path, traj, fmt) == len(traj)
    back = read_trajectory(path)
    np.testing.assert_array_equal(back.times, traj.times)
    np.testing.assert_array_equal(back.values, traj.values)
    if fmt == "bin":
        assert back.seed == 17
        assert back.params == P
        assert back.config == CFG


def test_binary_layout(tmp_path, traj):
    path = tmp_path / "t.bin"
    write_trajectory(path, traj)
    raw = path.read_bytes()
    assert raw[:8] == MAGIC
    (hlen,) = struct.unpack("<I", raw[8:12])
    (n,) = struct.unpack("<Q", raw[12 + hlen : 20 + hlen])
    assert n == len(traj)
    body = np.frombuffer(raw[20 + hlen :], dtype="<f8")
    np.testing.assert_array_equal(body[0::2], traj.times)
    np.testing.assert_array_equal(body[1::2], traj.values)


def test_stream_equals_whole(tmp_path, traj):
    a, b = tmp_path / "a.bin", tmp_path / "b.bin"
    write_trajectory(a, traj)
    cfg = SolverConfig(burn_in=100, max_steps=3000, seed=17, chunk=256)
    write_trajectory_stream(b, iter_chunks(P, cfg), trajectory_header(P, CFG))
    assert a.read_bytes() == b.read_bytes()


def test_truncated_binary(tmp_path, traj):
    path = tmp_path / "t.bin"
    write_trajectory(path, traj)
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(InputError, match="truncated"):
        read_trajectory(path)


def test_bad_inputs(tmp_path):
    with pytest.raises(InputError):
        read_trajectory(tmp_path / "missing.bin")
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(InputError, match="empty"):
        read_trajectory(empty)
    header_only = tmp_path / "h.csv"
    header_only.write_text("t,x\n")
    with pytest.raises(InputError, match="no data"):
        read_series(header_only)
    wrong = tmp_path / "w.csv"
    wrong.write_text("a,b\n1,2\n")
    with pytest.raises(InputError):
        read_trajectory(wrong)
    with pytest.raises(ValueError):
        write_trajectory_stream(tmp_path / "x", [], {}, fmt="hdf5")


def test_series_round_trip(tmp_path):
    t = np.arange(100) * 0.25
    r = np.random.default_rng(1).standard_normal(100)
    path = tmp_path / "s.csv"
    write_series(path, {"t": t, "r": r, "N": np.arange(100.0)})
    s, cols = read_series(path)
    np.testing.assert_array_equal(s.values, r)
    assert s.dt == 0.25
    s2, _ = read_series(path, "N")
    np.testing.assert_array_equal(s2.values, np.arange(100.0))
    with pytest.raises(InputError):
        read_series(path, "nope")


def test_series_non_uniform(tmp_path):
    path = tmp_path / "s.csv"
    write_series(path, {"t": [0.0, 1.0, 3.0], "r": [1.0, 2.0, 3.0]})
    with pytest.raises(InputError, match="uniform"):
        read_series(path)


@pytest.mark.parametrize(
    "text, expect",
    [("1700000000", 1700000000.0), ("1700000000.5", 1700000000.5),
     ("2023-11-14T22:13:20", 1700000000.0), ("2023-11-14T22:13:20Z", 1700000000.0),
     ("2023-11-14T23:13:20+01:00", 1700000000.0)],
)
def test_parse_timestamp(text, expect):
    assert parse_timestamp(text) == expect


def test_read_ticks(tmp_path):
    path = tmp_path / "ticks.csv"
    path.write_text("symbol,timestamp,price\nX,2023-11-14T22:13:20Z,10.5\nX,1700000001,10.75\n\n")
    t, p = read_ticks(path)
    assert t.tolist() == [1700000000.0, 1700000001.0]
    assert p.tolist() == [10.5, 10.75]
    path.write_text("timestamp,price\nbad,1\n")
    with pytest.raises(InputError):
        read_ticks(path)
    path.write_text("time,px\n1,1\n")
    with pytest.raises(InputError):
        read_ticks(path)


@given(st.dictionaries(st.from_regex(r"[a-z_]{1,10}", fullmatch=True),
                       st.one_of(st.integers(), st.floats(allow_nan=False), st.booleans(), st.none())))
def test_kv_round_trip(tmp_path_factory, items):
    path = tmp_path_factory.mktemp("kv") / "c.cfg"
    write_kv(path, items)
    back = read_kv(path)
    assert set(back) == set(items)
    for k, v in items.items():
        if isinstance(v, float):
            assert float(back[k]) == v
        elif v is None:
            assert back[k] == "none"


def test_kv_comments_and_errors(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("# comment\n\neta = 2.5\nname=a=b\n")
    assert read_kv(path) == {"eta": "2.5", "name": "a=b"}
    path.write_text("eta 2.5\n")
    with pytest.raises(InputError):
        read_kv(path)
