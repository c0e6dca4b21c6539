"""History/profile CSV files and the binary checkpoint format.

Checkpoint layout (all integers little-endian)::

    magic    8 bytes   b"MSDNNCKP"
    version  uint32
    hlen     uint64    length of the JSON header
    header   hlen bytes UTF-8 JSON: config echo, epoch, alpha, network manifest
    payload  float64 LE arrays, per network in manifest order: params, adam m, adam v
"""
from __future__ import annotations

import csv
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .config import RunConfig, config_from_dict
from .errors import CheckpointError
from .loss import TERMS
from .net import MscaleNet
from .optim import AdamState
from .problems import oracle_fieldset
from .trainer import EpochRecord, TrainState, init_state, problem_from_config

__all__ = [
    "HISTORY_HEADER",
    "PROFILE_HEADER",
    "write_history",
    "read_history",
    "write_profile",
    "checkpoint_save",
    "checkpoint_load",
    "oracle_state",
]

HISTORY_HEADER = (["epoch", "lr", "alpha", "loss_total"] + [f"loss_{t}" for t in TERMS]
                  + ["err_u", "err_p", "wall_seconds"])
PROFILE_HEADER = ["x1", "u1_dnn", "u1_exact", "u2_dnn", "u2_exact", "p_dnn", "p_exact"]

MAGIC = b"MSDNNCKP"
VERSION = 1
_PREFIX = struct.Struct("<8sIQ")


def _atomic_write(path, data: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(value, precision: int) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return format(float(value), f".{precision}g")


def _csv_bytes(header, rows, precision) -> bytes:
    lines = [",".join(header)]
    lines += [",".join(_fmt(v, precision) for v in row) for row in rows]
    return ("\n".join(lines) + "\n").encode()


def write_history(records, path, precision: int = 17):
    rows = []
    for r in records:
        rows.append([r.epoch, r.lr, r.alpha, r.loss_total]
                    + [r.terms.get(t) for t in TERMS] + [r.err_u, r.err_p, r.wall_seconds])
    _atomic_write(path, _csv_bytes(HISTORY_HEADER, rows, precision))


def read_history(path) -> list[EpochRecord]:
    def num(s):
        return None if s == "" else float(s)

    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(EpochRecord(
                epoch=int(row["epoch"]), lr=float(row["lr"]), alpha=float(row["alpha"]),
                loss_total=float(row["loss_total"]),
                terms={t: num(row[f"loss_{t}"]) for t in TERMS},
                err_u=num(row["err_u"]), err_p=num(row["err_p"]),
                wall_seconds=num(row["wall_seconds"])))
    return out


def write_profile(rows, path, precision: int = 17):
    _atomic_write(path, _csv_bytes(PROFILE_HEADER, [list(r) for r in rows], precision))


def _manifest(state: TrainState) -> list[dict]:
    out = []
    for name, net in state.fields.trainable():
        a = state.adam[name]
        out.append({
            "name": name,
            "out_dim": net.arch.out_dim,
            "hidden_layers": net.arch.hidden_layers,
            "hidden_width": net.arch.hidden_width,
            "scales": list(net.scales),
            "layer_shapes": [list(s) for s in net.arch.layer_shapes],
            "num_params": net.num_params,
            "adam": {"t": a.t, "beta1": a.beta1, "beta2": a.beta2, "eps": a.eps},
        })
    return out


def oracle_state(config: RunConfig) -> TrainState:
    """State whose fields are the exact solution (no parameters)."""
    fields = oracle_fieldset(problem_from_config(config), config.loss.variant)
    return TrainState(fields, {}, 0, config.loss.alpha)


def checkpoint_save(state: TrainState, config: RunConfig, path):
    oracle = not any(True for _ in state.fields.trainable())
    header = {
        "config": config.to_dict(),
        "epoch": state.epoch,
        "alpha": state.alpha,
        "oracle": oracle,
        "networks": _manifest(state),
    }
    payload = []
    for name, net in state.fields.trainable():
        a = state.adam[name]
        for arr in (net.flat, a.m, a.v):
            payload.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    hbytes = json.dumps(header, sort_keys=True).encode()
    _atomic_write(path, _PREFIX.pack(MAGIC, VERSION, len(hbytes)) + hbytes + b"".join(payload))


def checkpoint_load(path) -> tuple[RunConfig, TrainState]:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc.strerror}") from None
    if len(blob) < _PREFIX.size:
        raise CheckpointError("truncated checkpoint: missing prefix")
    magic, version, hlen = _PREFIX.unpack_from(blob)
    if magic != MAGIC:
        raise CheckpointError("magic: not a checkpoint file")
    if version != VERSION:
        raise CheckpointError(f"version: unsupported format version {version} (expected {VERSION})")
    body = blob[_PREFIX.size:]
    if len(body) < hlen:
        raise CheckpointError("truncated checkpoint: header")
    try:
        header = json.loads(body[:hlen])
    except ValueError:
        raise CheckpointError("header: malformed JSON") from None
    config = config_from_dict(header["config"])
    if header.get("oracle"):
        state = oracle_state(config)
        state.epoch, state.alpha = header["epoch"], header["alpha"]
        return config, state

    state = init_state(config)
    expected = {m["name"]: m for m in _manifest(state)}
    stored = header["networks"]
    if [m["name"] for m in stored] != list(expected):
        raise CheckpointError(
            f"networks: manifest lists {[m['name'] for m in stored]}, config needs {list(expected)}")
    payload = memoryview(body)[hlen:]
    need = sum(3 * 8 * m["num_params"] for m in stored)
    if len(payload) != need:
        raise CheckpointError(f"truncated checkpoint: payload has {len(payload)} bytes, expected {need}")
    pos = 0
    nets = dict(state.fields.trainable())
    for m in stored:
        exp = expected[m["name"]]
        for key in ("out_dim", "hidden_layers", "hidden_width", "scales", "layer_shapes", "num_params"):
            if m[key] != exp[key]:
                raise CheckpointError(f"networks.{m['name']}.{key}: stored {m[key]} != expected {exp[key]}")
        n = m["num_params"]
        arrays = []
        for _ in range(3):
            arrays.append(np.frombuffer(payload[pos:pos + 8 * n], dtype="<f8").astype(np.float64))
            pos += 8 * n
        net: MscaleNet = nets[m["name"]]
        net.flat[:] = arrays[0]
        a = m["adam"]
        state.adam[m["name"]] = AdamState(arrays[1], arrays[2], a["t"], a["beta1"], a["beta2"], a["eps"])
    state.epoch, state.alpha = header["epoch"], header["alpha"]
    return config, state
