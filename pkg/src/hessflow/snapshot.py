"""Binary field snapshots.

Layout, all little-endian: magic "HFLD", then u32 format version, u32
dimension n, u32 topology code (0 periodic, 1 box), n u32 extents, n f64
spacings, f64 time tag, then the node values as f64 row-major.  The grid
is rebuilt from spacing times extent (extent minus one on boxes), so a
write/read/write cycle is byte-identical whenever that product is exact,
which holds for the power-of-two grids used in regression runs.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import InvalidConfigurationError
from .grids import BOX, PERIODIC, Grid, ScalarField

MAGIC = b"HFLD"
FORMAT_VERSION = 1
_TOPOLOGY_CODE = {PERIODIC: 0, BOX: 1}
_CODE_TOPOLOGY = {code: name for name, code in _TOPOLOGY_CODE.items()}


def write_snapshot(path, field):
    grid = field.grid
    n = grid.n
    header = MAGIC
    header += struct.pack("<III", FORMAT_VERSION, n, _TOPOLOGY_CODE[grid.topology])
    header += struct.pack(f"<{n}I", *grid.shape)
    header += struct.pack(f"<{n}d", *grid.spacing)
    header += struct.pack("<d", field.time_tag)
    payload = np.ascontiguousarray(field.values, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def read_snapshot(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MAGIC:
        raise InvalidConfigurationError(f"{path}: not a snapshot file")
    version, n, code = struct.unpack_from("<III", raw, 4)
    if version != FORMAT_VERSION:
        raise InvalidConfigurationError(f"{path}: unsupported version {version}")
    if code not in _CODE_TOPOLOGY:
        raise InvalidConfigurationError(f"{path}: unknown topology code {code}")
    off = 16
    shape = struct.unpack_from(f"<{n}I", raw, off)
    off += 4 * n
    spacing = struct.unpack_from(f"<{n}d", raw, off)
    off += 8 * n
    (time_tag,) = struct.unpack_from("<d", raw, off)
    off += 8

    topology = _CODE_TOPOLOGY[code]
    if topology == PERIODIC:
        lengths = tuple(h * m for h, m in zip(spacing, shape))
    else:
        lengths = tuple(h * (m - 1) for h, m in zip(spacing, shape))
    grid = Grid(shape=shape, lengths=lengths, topology=topology)

    count = int(np.prod(shape))
    if len(raw) - off < 8 * count:
        raise InvalidConfigurationError(f"{path}: truncated payload")
    values = np.frombuffer(raw, dtype="<f8", count=count, offset=off)
    return ScalarField(grid, values.reshape(shape).copy(), time_tag)
