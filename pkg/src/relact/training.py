"""Optimization and the two-stage training schedule.

Stage 1 trains the relation branch only (the interaction branch is not
even registered with the optimizer); stage 2 alternates relation and
interaction batches per step with the relation-path learning rate
scaled down. All randomness is derived statelessly from (seed, step),
so a run can resume from a checkpoint bit-for-bit.
"""

from __future__ import annotations

import csv
import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .tensor import Tensor


class AdamW:
    """Moment-estimate gradient descent with decoupled weight decay."""

    def __init__(self, params: dict, lr: float = 1e-3, betas=(0.9, 0.999),
                 eps: float = 1e-8, weight_decay: float = 1e-4,
                 lr_scales: dict | None = None):
        self.params = dict(params)
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.lr_scales = dict(lr_scales or {})
        self.step_count = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def step(self, grads: dict):
        """Apply one update; grads maps param name -> gradient array."""
        self.step_count += 1
        bc1 = 1.0 - self.b1 ** self.step_count
        bc2 = 1.0 - self.b2 ** self.step_count
        for name, p in self.params.items():
            g = grads.get(name)
            if g is None:
                continue
            g = g.data if isinstance(g, Tensor) else np.asarray(g)
            m = self.m[name]
            v = self.v[name]
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            lr = self.lr * self.lr_scales.get(name, 1.0)
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p.data -= lr * (update + self.weight_decay * p.data)

    def state_blobs(self) -> dict:
        out = {"opt.step": np.array([float(self.step_count)])}
        for k in self.params:
            out[f"opt.m.{k}"] = self.m[k]
            out[f"opt.v.{k}"] = self.v[k]
        return out

    def load_state_blobs(self, blobs: dict):
        self.step_count = int(blobs["opt.step"][0])
        for k in self.params:
            self.m[k] = np.array(blobs[f"opt.m.{k}"])
            self.v[k] = np.array(blobs[f"opt.v.{k}"])


# -- checkpoint container ---------------------------------------------------

MAGIC = b"RACT"
FORMAT_VERSION = 1


def save_checkpoint(path, config_digest: str, step: int, blobs: dict):
    """Binary checkpoint: header + named little-endian float64 blobs."""
    digest_bytes = config_digest.encode("ascii")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<qqq", FORMAT_VERSION, step, len(blobs)))
        f.write(struct.pack("<q", len(digest_bytes)))
        f.write(digest_bytes)
        for name in sorted(blobs):
            arr = np.ascontiguousarray(
                blobs[name].data if isinstance(blobs[name], Tensor) else blobs[name],
                dtype="<f8",
            )
            nb = name.encode("utf-8")
            f.write(struct.pack("<q", len(nb)))
            f.write(nb)
            f.write(struct.pack("<q", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}q", *arr.shape))
            f.write(arr.tobytes())


def load_checkpoint(path):
    """Returns (config_digest, step, blobs dict name -> float64 array)."""
    with open(path, "rb") as f:
        if f.read(4) != MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        version, step, count = struct.unpack("<qqq", f.read(24))
        if version != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        (dlen,) = struct.unpack("<q", f.read(8))
        digest = f.read(dlen).decode("ascii")
        blobs = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<q", f.read(8))
            name = f.read(nlen).decode("utf-8")
            (ndim,) = struct.unpack("<q", f.read(8))
            shape = struct.unpack(f"<{ndim}q", f.read(8 * ndim)) if ndim else ()
            n = int(np.prod(shape)) if ndim else 1
            data = np.frombuffer(f.read(8 * n), dtype="<f8").astype(np.float64)
            blobs[name] = data.reshape(shape)
    return digest, step, blobs


def step_rng(seed: int, step: int, salt: int = 0):
    """Stateless per-step generator; resuming at a step reproduces it."""
    return np.random.default_rng(np.random.SeedSequence([seed, salt, step]))


def epoch_order(seed: int, epoch: int, n: int) -> np.ndarray:
    return step_rng(seed, epoch, salt=7).permutation(n)


class LossLog:
    """Append-only CSV of per-step losses."""

    FIELDS = ["step", "stage", "task", "total", "seg", "align", "rel", "hoi"]

    def __init__(self, path):
        self.path = Path(path)
        fresh = not self.path.exists()
        self._fh = open(self.path, "a", newline="")
        self._writer = csv.writer(self._fh)
        if fresh:
            self._writer.writerow(self.FIELDS)

    def write(self, step, stage, task, parts: dict):
        self._writer.writerow([
            step, stage, task,
            f"{parts['total']:.9g}", f"{parts['seg']:.9g}",
            f"{parts['align']:.9g}", f"{parts['rel']:.9g}", f"{parts['hoi']:.9g}",
        ])
        self._fh.flush()

    def close(self):
        self._fh.close()
