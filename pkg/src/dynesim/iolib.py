"""Trajectory and phase-program persistence.

Binary dump layout (all little-endian):

    offset  size  field
    0       4     magic ``b"DYN1"``
    4       4     uint32 version (currently 1)
    8       8     float64 dt [s]
    16      8     uint64 n_steps
    24      4     uint32 n_fields
    28      -     per field: 16-byte ASCII name (NUL padded), then
                  n_steps packed float64 values

CSV exports carry a one-line header and use round-trippable ``%.17g``
formatting so identical runs produce identical bytes.
"""

from __future__ import annotations

import struct

import numpy as np

from .engine import TrajectoryRecord
from .states import TimeGrid

MAGIC = b"DYN1"
VERSION = 1

FLOAT_FMT = "%.17g"


def write_dump(path, grid: TimeGrid, fields: dict) -> None:
    """Write named float64 series sharing one grid."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IdQI", VERSION, grid.dt, grid.n_steps, len(fields)))
        for name, data in fields.items():
            arr = np.ascontiguousarray(np.asarray(data, dtype="<f8"))
            if arr.shape != (grid.n_steps,):
                raise ValueError(f"field {name!r} must have {grid.n_steps} samples")
            raw = name.encode("ascii")
            if len(raw) > 16:
                raise ValueError(f"field name {name!r} longer than 16 bytes")
            fh.write(raw.ljust(16, b"\0"))
            fh.write(arr.tobytes())


def read_dump(path) -> tuple:
    """Read a dump back; returns (grid, {name: array})."""
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise ValueError(f"{path} is not a trajectory dump")
        version, dt, n_steps, n_fields = struct.unpack("<IdQI", fh.read(24))
        if version != VERSION:
            raise ValueError(f"unsupported dump version {version}")
        fields = {}
        for _ in range(n_fields):
            name = fh.read(16).rstrip(b"\0").decode("ascii")
            data = np.frombuffer(fh.read(8 * n_steps), dtype="<f8")
            fields[name] = np.array(data)
    return TimeGrid(dt=dt, n_steps=int(n_steps)), fields


def write_trajectory_dump(path, record: TrajectoryRecord) -> None:
    write_dump(path, record.grid, {
        "v_dt": record.v_dt,
        "phi": record.phi,
        "x": record.bloch[:, 0],
        "y": record.bloch[:, 1],
        "z": record.bloch[:, 2],
    })


def write_phase_program(path, grid: TimeGrid, phi: np.ndarray) -> None:
    write_dump(path, grid, {"phi": phi})


def read_phase_program(path) -> tuple:
    grid, fields = read_dump(path)
    if "phi" not in fields:
        raise ValueError(f"{path} holds no phase program")
    return grid, fields["phi"]


def write_trajectory_csv(path, record: TrajectoryRecord) -> None:
    """Per-step CSV (t, V_dt, phi, x, y, z)."""
    n = record.grid.n_steps
    t = (np.arange(n) + 1) * record.grid.dt
    with open(path, "w", newline="") as fh:
        fh.write("t_s,v_dt,phi_rad,x,y,z\n")
        for k in range(n):
            row = (t[k], record.v_dt[k], record.phi[k],
                   record.bloch[k, 0], record.bloch[k, 1], record.bloch[k, 2])
            fh.write(",".join(FLOAT_FMT % v for v in row) + "\n")


def write_shots_csv(path, rows) -> None:
    """Per-shot estimate CSV; rows of (theta_idx, traj_idx, theta_true,
    theta_hat, r_mag, r2_max_err)."""
    with open(path, "w", newline="") as fh:
        fh.write("theta_index,traj_index,theta_true,theta_hat,r_mag,r2_max_err\n")
        for ti, tj, tt, th, rm, re in rows:
            fh.write("%d,%d," % (ti, tj)
                     + ",".join(FLOAT_FMT % v for v in (tt, th, rm, re)) + "\n")
