"""Frozen class/image embedding tables standing in for a pretrained
vision-language encoder.

The class table maps every class id to a fixed unit-norm vector and the
background id (last row) to the zero vector; it is generated from a
seed, never trained, and exportable as a little-endian binary blob with
a (rows, cols, seed) header. Image embeddings are a fixed random
projection of the mean pixel color.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

HEADER = struct.Struct("<3q")


def _unit_rows(rng, n: int, width: int) -> np.ndarray:
    """n distinct unit rows; orthonormal when n <= width."""
    a = rng.normal(size=(width, n) if n <= width else (n, width))
    if n <= width:
        q, r = np.linalg.qr(a)
        rows = (q * np.sign(np.diag(r))).T
    else:
        rows = a / np.linalg.norm(a, axis=1, keepdims=True)
    return rows


def _discrete_rows(n: int, width: int) -> np.ndarray:
    """Injective label-code rows: cycling one-hot plus a secondary code."""
    rows = np.zeros((n, width))
    for c in range(n):
        rows[c, c % width] = 1.0
        rows[c, (c // width + 1) % width] += 0.5
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)


class TeacherEmbedder:
    """Deterministic frozen embedding source.

    mode 'teacher' is the default random-orthonormal table; 'alt' draws
    the same construction from a shifted seed (an alternative embedding
    source for ablations); 'discrete' uses normalized label codes.
    """

    def __init__(self, n_classes: int, width: int, seed: int, mode: str = "teacher"):
        if mode not in ("teacher", "alt", "discrete"):
            raise ValueError(f"unknown embedding mode {mode!r}")
        self.n_classes = int(n_classes)
        self.width = int(width)
        self.seed = int(seed)
        self.mode = mode
        table = np.zeros((self.n_classes + 1, self.width))
        if mode == "discrete":
            table[: self.n_classes] = _discrete_rows(self.n_classes, self.width)
        else:
            s = self.seed + (0x5EED if mode == "alt" else 0)
            rng = np.random.default_rng(s)
            table[: self.n_classes] = _unit_rows(rng, self.n_classes, self.width)
        table.setflags(write=False)
        self.table = table
        self._img_proj = np.random.default_rng(self.seed + 101).normal(
            scale=1.0, size=(3, self.width)
        )
        self._width_proj = {}

    @property
    def background_id(self) -> int:
        return self.n_classes

    def row(self, class_id: int) -> np.ndarray:
        return self.table[class_id]

    def rows(self, class_ids) -> np.ndarray:
        return self.table[np.asarray(class_ids, dtype=int)]

    def projection_to(self, width: int) -> np.ndarray:
        """Fixed seeded linear map from table width to another width."""
        if width == self.width:
            return np.eye(self.width)
        if width not in self._width_proj:
            rng = np.random.default_rng(self.seed + 7_000 + width)
            self._width_proj[width] = rng.normal(
                scale=1.0 / np.sqrt(self.width), size=(self.width, width)
            )
        return self._width_proj[width]

    def embed_image(self, raster: np.ndarray, width: int | None = None) -> np.ndarray:
        """Unit-norm embedding of an image raster (H0, W0, 3)."""
        gap = np.asarray(raster, dtype=np.float64).reshape(-1, 3).mean(axis=0)
        e = gap @ self._img_proj
        e = e / (np.linalg.norm(e) + 1e-12)
        if width is not None and width != self.width:
            e = e @ self.projection_to(width)
        return e

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(HEADER.pack(self.table.shape[0], self.table.shape[1], self.seed))
        h.update(np.ascontiguousarray(self.table, dtype="<f8").tobytes())
        return h.hexdigest()

    def save_table(self, path):
        with open(path, "wb") as f:
            f.write(HEADER.pack(self.table.shape[0], self.table.shape[1], self.seed))
            f.write(np.ascontiguousarray(self.table, dtype="<f8").tobytes())

    @staticmethod
    def load_table(path) -> np.ndarray:
        with open(path, "rb") as f:
            rows, cols, _seed = HEADER.unpack(f.read(HEADER.size))
            data = np.frombuffer(f.read(), dtype="<f8")
        if data.size != rows * cols:
            raise ValueError(f"table blob has {data.size} values, header says {rows}x{cols}")
        return data.reshape(rows, cols).astype(np.float64)
