"""Binary checkpoint format.

Layout: magic ``HMAN``, format version (u16 LE), entry count (u32 LE),
then a table of entries (name length u16 + utf-8 name, ndim u8, dims as
u32 LE, dtype code u8), followed by the payloads in table order as
row-major little-endian float32.  Files round-trip bit-exactly through
load + save.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .hypergraph import NodeSpace
from .model import ModelConfig, ModelParams
from .autodiff import Tensor

MAGIC = b"HMAN"
VERSION = 1
_DTYPE_F32 = 0

_META_NAME = "_config"


class CheckpointError(ValueError):
    pass


def _meta_array(params: ModelParams) -> np.ndarray:
    cfg, nodes = params.cfg, params.nodes
    return np.array(
        [
            cfg.dim,
            cfg.layers,
            1.0 if cfg.residual else 0.0,
            cfg.leaky_slope,
            cfg.seed,
            nodes.n_pois,
            nodes.n_users,
            nodes.n_categories,
            nodes.n_slots,
        ],
        dtype=np.float64,
    ).reshape(1, -1)


def save_params(params: ModelParams, path: str | Path) -> None:
    entries = [(_META_NAME, _meta_array(params))]
    entries += [(name, t.value) for name, t in params.tensors.items()]
    with Path(path).open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HI", VERSION, len(entries)))
        for name, arr in entries:
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", arr.ndim))
            for dim in arr.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(struct.pack("<B", _DTYPE_F32))
        for _, arr in entries:
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_params(path: str | Path) -> ModelParams:
    path = Path(path)
    data = path.read_bytes()
    if data[:4] != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint (bad magic)")
    version, count = struct.unpack_from("<HI", data, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    off = 10
    table: list[tuple[str, tuple[int, ...]]] = []
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", data, off)
        off += 2
        name = data[off : off + name_len].decode("utf-8")
        off += name_len
        (ndim,) = struct.unpack_from("<B", data, off)
        off += 1
        shape = tuple(struct.unpack_from("<" + "I" * ndim, data, off)) if ndim else ()
        off += 4 * ndim
        (dtype_code,) = struct.unpack_from("<B", data, off)
        off += 1
        if dtype_code != _DTYPE_F32:
            raise CheckpointError(f"unknown dtype code {dtype_code} for entry {name!r}")
        table.append((name, shape))

    arrays: dict[str, np.ndarray] = {}
    for name, shape in table:
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        arr = np.frombuffer(data, dtype="<f4", count=n, offset=off).reshape(shape)
        off += 4 * n
        arrays[name] = arr.astype(np.float64)
    if off != len(data):
        raise CheckpointError(f"{len(data) - off} trailing bytes in {path}")
    if _META_NAME not in arrays:
        raise CheckpointError("checkpoint missing config entry")

    meta = arrays.pop(_META_NAME).ravel()
    cfg = ModelConfig(
        dim=int(meta[0]),
        layers=int(meta[1]),
        residual=bool(meta[2]),
        leaky_slope=float(meta[3]),
        seed=int(meta[4]),
    )
    nodes = NodeSpace(
        n_pois=int(meta[5]),
        n_users=int(meta[6]),
        n_categories=int(meta[7]),
        n_slots=int(meta[8]),
    )
    tensors = {name: Tensor(arr) for name, arr in arrays.items()}
    return ModelParams(tensors, cfg, nodes)
