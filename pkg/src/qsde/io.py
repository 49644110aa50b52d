"""File formats: trajectory binary/CSV, uniform series CSV, tick CSV, key=value configs.

Binary trajectory layout (all little-endian)::

    8 bytes   magic  b"QSDETRJ1"
    uint32    header length L
    L bytes   UTF-8 JSON header (params, seed, ...)
    uint64    number of records n
    n x (float64 t, float64 x)
"""

from __future__ import annotations

import json
import os
import struct
import warnings
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable

import numpy as np

from .sde import SdeParams, SolverConfig, Trajectory
from .series import ReturnSeries

MAGIC = b"QSDETRJ1"
RECORD = np.dtype([("t", "<f8"), ("x", "<f8")])
FLOAT_FMT = "%.17g"


class InputError(OSError):
    """Missing, empty or malformed input file."""


def _fmt_rows(cols: list[np.ndarray]) -> str:
    if not cols[0].size:
        return ""
    arr = np.column_stack(cols)
    lines = [",".join(FLOAT_FMT % v for v in row) for row in arr]
    return "\n".join(lines) + "\n"


# -- trajectories -----------------------------------------------------------------


def trajectory_header(traj_or_params, cfg: SolverConfig | None = None) -> dict:
    if isinstance(traj_or_params, Trajectory):
        p, cfg = traj_or_params.params, traj_or_params.config
    else:
        p = traj_or_params
    head = {}
    if p is not None:
        head["params"] = {k: getattr(p, k) for k in ("eta", "lam", "epsilon", "r0", "sigma")}
    if cfg is not None:
        head["solver"] = {
            k: getattr(cfg, k)
            for k in ("kappa", "burn_in", "x_init", "seed", "max_steps", "t_end", "x_max")
        }
        head["seed"] = cfg.seed
    return head


def write_trajectory_stream(
    path: str | os.PathLike,
    chunks: Iterable[tuple[np.ndarray, np.ndarray]],
    header: dict,
    fmt: str = "bin",
) -> int:
    """Write ``(times, values)`` blocks as they arrive; returns the record count."""
    path = Path(path)
    n = 0
    if fmt == "bin":
        blob = json.dumps(header, sort_keys=True).encode()
        with open(path, "wb") as fh:
            fh.write(MAGIC + struct.pack("<I", len(blob)) + blob)
            count_at = fh.tell()
            fh.write(struct.pack("<Q", 0))
            for t, x in chunks:
                rec = np.empty(t.size, RECORD)
                rec["t"], rec["x"] = t, x
                fh.write(rec.tobytes())
                n += t.size
            fh.seek(count_at)
            fh.write(struct.pack("<Q", n))
    elif fmt == "csv":
        with open(path, "w", newline="") as fh:
            fh.write("t,x\n")
            for t, x in chunks:
                fh.write(_fmt_rows([t, x]))
                n += t.size
    else:
        raise ValueError(f"unknown trajectory format {fmt!r}")
    return n


def write_trajectory(path, traj: Trajectory, fmt: str = "bin") -> int:
    return write_trajectory_stream(
        path, [(traj.times, traj.values)], trajectory_header(traj), fmt
    )


def _params_from_header(head: dict):
    p = SdeParams(**head["params"]) if "params" in head else None
    cfg = None
    if "solver" in head:
        cfg = SolverConfig(**head["solver"])
    return p, cfg


def read_trajectory(path) -> Trajectory:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"no such file: {path}")
    with open(path, "rb") as fh:
        start = fh.read(len(MAGIC))
        if start == MAGIC:
            try:
                (hlen,) = struct.unpack("<I", fh.read(4))
                head = json.loads(fh.read(hlen).decode())
                (n,) = struct.unpack("<Q", fh.read(8))
            except (struct.error, ValueError) as exc:
                raise InputError(f"{path}: corrupt trajectory header") from exc
            body = fh.read(n * RECORD.itemsize)
            if len(body) != n * RECORD.itemsize:
                got = len(body) // RECORD.itemsize
                raise InputError(f"{path}: truncated trajectory ({got} of {n} records)")
            rec = np.frombuffer(body, dtype=RECORD)
            p, cfg = _params_from_header(head)
            return Trajectory(rec["t"].copy(), rec["x"].copy(), head.get("seed"), p, cfg)
    cols, data = read_csv_columns(path)
    if cols[:2] != ["t", "x"]:
        raise InputError(f"{path}: expected trajectory columns t,x; got {cols}")
    return Trajectory(data[:, 0], data[:, 1])


# -- uniform series -------------------------------------------------------------


def read_csv_columns(path) -> tuple[list[str], np.ndarray]:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"no such file: {path}")
    with open(path) as fh:
        header = fh.readline().strip()
        if not header:
            raise InputError(f"{path}: empty file")
        cols = [c.strip() for c in header.split(",")]
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", UserWarning)  # empty body, reported below
                data = np.loadtxt(fh, delimiter=",", ndmin=2)
        except ValueError as exc:
            raise InputError(f"{path}: malformed CSV ({exc})") from exc
    if data.size == 0:
        raise InputError(f"{path}: no data rows")
    if data.shape[1] != len(cols):
        raise InputError(f"{path}: header has {len(cols)} columns, rows have {data.shape[1]}")
    return cols, data


def write_series(path, columns: dict[str, np.ndarray]) -> None:
    names = list(columns)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(names) + "\n")
        fh.write(_fmt_rows([np.asarray(columns[k], dtype=float) for k in names]))


def read_series(path, column: str | None = None) -> tuple[ReturnSeries, dict[str, np.ndarray]]:
    """Read a uniform series CSV whose first column is ``t``.

    Returns the selected value column (default: the second column) as a
    ReturnSeries with ``dt`` taken from the time column, plus all columns.
    """
    cols, data = read_csv_columns(path)
    if cols[0] != "t":
        raise InputError(f"{path}: first column must be t")
    if data.shape[1] < 2:
        raise InputError(f"{path}: no value column")
    name = column or cols[1]
    if name not in cols:
        raise InputError(f"{path}: no column {name!r} (have {cols})")
    t = data[:, 0]
    if t.size > 1:
        steps = np.diff(t)
        dt = float(np.median(steps))
        if not dt > 0 or np.max(np.abs(steps - dt)) > 1e-6 * dt:
            raise InputError(f"{path}: time column is not uniformly spaced")
    else:
        dt = 1.0
    allcols = {c: data[:, i] for i, c in enumerate(cols)}
    return ReturnSeries(allcols[name], dt=dt, meta={"source": str(path), "column": name}), allcols


# -- ticks ------------------------------------------------------------------------


def parse_timestamp(text: str) -> float:
    """Epoch seconds from an integer/decimal epoch or an ISO-8601 string (naive = UTC)."""
    s = text.strip()
    try:
        return float(s)
    except ValueError:
        pass
    if s.endswith("Z"):
        s = s[:-1] + "+00:00"
    try:
        dt = datetime.fromisoformat(s)
    except ValueError as exc:
        raise InputError(f"bad timestamp {text!r}") from exc
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def read_ticks(path) -> tuple[np.ndarray, np.ndarray]:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"no such file: {path}")
    with open(path) as fh:
        header = [c.strip().lower() for c in fh.readline().strip().split(",")]
        if header == [""]:
            raise InputError(f"{path}: empty file")
        try:
            it, ip = header.index("timestamp"), header.index("price")
        except ValueError as exc:
            raise InputError(f"{path}: need timestamp and price columns, got {header}") from exc
        ts, px = [], []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.strip().split(",")
            try:
                ts.append(parse_timestamp(parts[it]))
                px.append(float(parts[ip]))
            except (IndexError, ValueError) as exc:
                raise InputError(f"{path}:{lineno}: malformed row") from exc
    if not ts:
        raise InputError(f"{path}: no ticks")
    return np.array(ts), np.array(px)


# -- key=value configs --------------------------------------------------------------


def read_kv(path) -> dict[str, str]:
    """Flat ``key = value`` text; ``#`` starts a comment line."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"no such file: {path}")
    out = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise InputError(f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def write_kv(path, items: dict) -> None:
    lines = [f"{k} = {_kv_value(v)}" for k, v in items.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def _kv_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return " ".join(_kv_value(x) for x in v)
    return str(v)
