"""Self-describing single-file checkpoints.

Layout (documented in README):
  bytes 0-7    magic ``SUMMCKPT``
  bytes 8-15   little-endian u64 length of the JSON header
  header       UTF-8 JSON: format version, parameter names + shapes in
               storage order, config dict, config hash, optimizer state
               (moment names + shapes), free-form ``extra`` (e.g. vocab)
  payload      the named float64 arrays, C-order little-endian, in header
               order: parameters first, then optimizer moments (m then v
               per name)

Serialization is canonical (sorted names, compact sorted-key JSON) so
identical state produces identical bytes.
"""

import hashlib
import json
import struct
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np
import torch

from summ.optim import OptimState

MAGIC = b"SUMMCKPT"
FORMAT_VERSION = 1


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _as_f8(tensor: torch.Tensor) -> np.ndarray:
    arr = tensor.detach().cpu().to(torch.float64).numpy()
    return np.ascontiguousarray(arr, dtype="<f8")


def save_checkpoint(
    path: Path,
    params: Dict[str, torch.Tensor],
    config: dict,
    optim: Optional[OptimState] = None,
    extra: Optional[dict] = None,
) -> None:
    names = sorted(params)
    header = {
        "format_version": FORMAT_VERSION,
        "params": [{"name": n, "shape": list(params[n].shape)} for n in names],
        "config": config,
        "config_hash": config_hash(config),
        "optimizer": None,
        "extra": extra or {},
    }
    moment_names = []
    if optim is not None:
        moment_names = sorted(optim.moments)
        header["optimizer"] = {
            "lr": optim.lr,
            "beta1": optim.beta1,
            "beta2": optim.beta2,
            "eps": optim.eps,
            "step": optim.step,
            "n_halvings": optim.n_halvings,
            "moments": [{"name": n, "shape": list(optim.moments[n][0].shape)}
                        for n in moment_names],
        }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for n in names:
            fh.write(_as_f8(params[n]).tobytes())
        for n in moment_names:
            m, v = optim.moments[n]
            fh.write(_as_f8(m).tobytes())
            fh.write(_as_f8(v).tobytes())


def load_checkpoint(path: Path) -> Tuple[Dict[str, torch.Tensor], dict]:
    """Returns (name -> float64 tensor, header dict).  Optimizer moments, when
    present, are attached under header['optimizer']['moment_tensors']."""
    with open(path, "rb") as fh:
        if fh.read(8) != MAGIC:
            raise ValueError(f"{path} is not a summ checkpoint")
        (header_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        if header["format_version"] != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header['format_version']}")

        def read_array(shape):
            count = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(count * 8), dtype="<f8", count=count)
            return torch.from_numpy(data.reshape(shape).copy())

        params = {spec["name"]: read_array(spec["shape"]) for spec in header["params"]}
        if header["optimizer"] is not None:
            header["optimizer"]["moment_tensors"] = {
                spec["name"]: (read_array(spec["shape"]), read_array(spec["shape"]))
                for spec in header["optimizer"]["moments"]
            }
    return params, header


def restore_optim_state(header: dict) -> Optional[OptimState]:
    info = header.get("optimizer")
    if info is None:
        return None
    state = OptimState(lr=info["lr"], beta1=info["beta1"], beta2=info["beta2"],
                       eps=info["eps"], step=info["step"], n_halvings=info["n_halvings"])
    state.moments = dict(info.get("moment_tensors", {}))
    return state


def load_into_module(module: torch.nn.Module, params: Dict[str, torch.Tensor]) -> None:
    have = dict(module.named_parameters())
    if set(have) != set(params):
        missing = set(have) ^ set(params)
        raise ValueError(f"checkpoint/module parameter mismatch: {sorted(missing)}")
    with torch.no_grad():
        for name, p in have.items():
            p.copy_(params[name].reshape(p.shape))
