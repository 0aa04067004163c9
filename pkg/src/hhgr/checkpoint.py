"""Binary checkpoint format.

Layout: magic "HHGRCKPT", then 7 little-endian uint32 fields
(version, d, L_u, L_g, num_users, num_items, num_groups), then every
parameter tensor as row-major little-endian float32 in the canonical
ModelParams.tensors() order.  A JSON sidecar (same path, .json suffix)
carries the effective run configuration so `evaluate` can rebuild the
split and mode.
"""

import json
import struct
from pathlib import Path

import numpy as np

from .autodiff import Tensor
from .errors import CheckpointError
from .model import ModelParams

MAGIC = b"HHGRCKPT"
VERSION = 1
_HEADER = struct.Struct("<7I")


def sidecar_path(path):
    return Path(path).with_suffix(".json")


def _tensor_shapes(d, l_u, l_g, num_users, num_items):
    shapes = [("user_embed", (num_users, d)), ("item_embed", (num_items, d))]
    shapes += [(f"theta_{l}", (d, d)) for l in range(l_u)]
    shapes += [(f"gamma_{l}", (d, d)) for l in range(l_u)]
    shapes += [(f"phi_{l}", (d, d)) for l in range(l_u)]
    shapes += [(f"psi_{l}", (d, d)) for l in range(l_g)]
    shapes += [("w_agg", (d, d)), ("attn_vec", (d, 1)), ("w_disc", (d, d))]
    return shapes


def save_checkpoint(path, params, meta):
    """Write checkpoint.bin and its JSON sidecar; returns the binary path."""
    path = Path(path)
    d = params.d
    l_u = len(params.theta)
    l_g = len(params.psi)
    num_users = params.user_embed.shape[0]
    num_items = params.item_embed.shape[0]
    num_groups = int(meta.get("num_groups", 0))
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_HEADER.pack(VERSION, d, l_u, l_g, num_users, num_items,
                              num_groups))
        for name, tensor in params.tensors():
            fh.write(np.ascontiguousarray(tensor.data, dtype="<f4").tobytes())
    meta = dict(meta)
    meta.update(d=d, l_u=l_u, l_g=l_g, num_users=num_users,
                num_items=num_items, num_groups=num_groups)
    with open(sidecar_path(path), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def load_checkpoint(path):
    """Read (ModelParams, meta dict); raises CheckpointError on bad files."""
    path = Path(path)
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: bad magic")
    off = len(MAGIC)
    try:
        version, d, l_u, l_g, num_users, num_items, num_groups = \
            _HEADER.unpack_from(blob, off)
    except struct.error:
        raise CheckpointError(f"{path}: truncated header") from None
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    off += _HEADER.size
    loaded = {}
    for name, shape in _tensor_shapes(d, l_u, l_g, num_users, num_items):
        nbytes = int(np.prod(shape)) * 4
        if off + nbytes > len(blob):
            raise CheckpointError(f"{path}: truncated at tensor {name}")
        arr = np.frombuffer(blob, dtype="<f4", count=int(np.prod(shape)),
                            offset=off).reshape(shape)
        loaded[name] = Tensor(arr.astype(np.float64), name=name)
        off += nbytes
    if off != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - off} trailing bytes")

    params = ModelParams(
        user_embed=loaded["user_embed"], item_embed=loaded["item_embed"],
        theta=[loaded[f"theta_{l}"] for l in range(l_u)],
        gamma=[loaded[f"gamma_{l}"] for l in range(l_u)],
        phi=[loaded[f"phi_{l}"] for l in range(l_u)],
        psi=[loaded[f"psi_{l}"] for l in range(l_g)],
        w_agg=loaded["w_agg"], attn_vec=loaded["attn_vec"],
        w_disc=loaded["w_disc"])

    side = sidecar_path(path)
    if side.exists():
        with open(side, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
    else:
        meta = {"d": d, "l_u": l_u, "l_g": l_g, "num_users": num_users,
                "num_items": num_items, "num_groups": num_groups}
    header = dict(d=d, l_u=l_u, l_g=l_g, num_users=num_users,
                  num_items=num_items, num_groups=num_groups)
    for key, value in header.items():
        if key in meta and int(meta[key]) != value:
            raise CheckpointError(
                f"{path}: sidecar {key}={meta[key]} != header {value}")
    meta.update(header)
    return params, meta
