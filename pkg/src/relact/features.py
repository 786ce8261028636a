"""Convolutional stem, box-level segmentation head, semantic map, and
semantic-spatial aggregation.

The stem downsamples the raster by a factor of 8 (three stride-2
convolutions) to a (H, W, d) grid. A channel-reduction stack halves the
width to c' = d/2, the segmentation head scores every cell over object
classes plus background, and the per-cell argmax picks a frozen class
embedding; visual and embedding grids are then projected and
concatenated back to width d = 2*c'.
"""

from __future__ import annotations

import numpy as np

from . import funcs as F
from . import tensor as T
from .attention import EVAL, LayerNorm, RunState, glorot
from .boxes import SegTarget
from .embeddings import TeacherEmbedder
from .tensor import ShapeError, Tensor

STRIDE = 8


class Conv:
    def __init__(self, rng, kh, kw, cin, cout, stride=1, pad=0):
        self.kh, self.kw, self.cin, self.cout = kh, kw, cin, cout
        self.stride, self.pad = stride, pad
        self.w = glorot(rng, kh * kw * cin, cout)
        self.b = Tensor(np.zeros(cout))

    def __call__(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.w, self.b, self.kh, self.kw, self.stride, self.pad)

    def params(self, prefix: str) -> dict:
        return {f"{prefix}.w": self.w, f"{prefix}.b": self.b}


class ConvStem:
    """Three stride-2 3x3 convolutions with per-cell normalization."""

    def __init__(self, rng, widths=(16, 32, 64)):
        cins = (3,) + tuple(widths[:-1])
        self.convs = [
            Conv(rng, 3, 3, cin, cout, stride=2, pad=1)
            for cin, cout in zip(cins, widths)
        ]
        self.norms = [LayerNorm(c) for c in widths]
        self.out_channels = widths[-1]

    def __call__(self, image: Tensor) -> Tensor:
        h0, w0, c = image.shape
        if c != 3:
            raise ShapeError(f"stem expects an (H0, W0, 3) raster, got {image.shape}")
        if h0 % STRIDE or w0 % STRIDE:
            raise ShapeError(f"image dims {h0}x{w0} not divisible by stride {STRIDE}")
        x = image
        for conv, norm in zip(self.convs, self.norms):
            x = T.gelu(norm(conv(x)))
        return x

    def params(self, prefix: str) -> dict:
        out = {}
        for i, (c, n) in enumerate(zip(self.convs, self.norms)):
            out.update(c.params(f"{prefix}.conv{i}"))
            out.update(n.params(f"{prefix}.norm{i}"))
        return out


class ChannelReduce:
    """Five successive 1x1 convolutions down to the reduced width."""

    def __init__(self, rng, cin: int, cout: int):
        dims = [cin, cout, cout, cout, cout, cout]
        self.convs = [Conv(rng, 1, 1, dims[i], dims[i + 1]) for i in range(5)]

    def __call__(self, x: Tensor) -> Tensor:
        for conv in self.convs[:-1]:
            x = T.gelu(conv(x))
        return self.convs[-1](x)

    def params(self, prefix: str) -> dict:
        out = {}
        for i, c in enumerate(self.convs):
            out.update(c.params(f"{prefix}.{i}"))
        return out


class SegHead:
    """Five 3x3 convolutions with normalization, then a 1x1 classifier
    over object classes plus background."""

    def __init__(self, rng, cin: int, n_classes: int):
        self.convs = [Conv(rng, 3, 3, cin, cin, stride=1, pad=1) for _ in range(5)]
        self.norms = [LayerNorm(cin) for _ in range(5)]
        self.cls = Conv(rng, 1, 1, cin, n_classes + 1)

    def logits(self, x: Tensor) -> Tensor:
        for conv, norm in zip(self.convs, self.norms):
            x = T.gelu(norm(conv(x)))
        return self.cls(x)

    def __call__(self, x: Tensor) -> Tensor:
        """Per-cell, per-channel scores in (0, 1)."""
        return T.sigmoid(self.logits(x))

    def params(self, prefix: str) -> dict:
        out = {}
        for i, (c, n) in enumerate(zip(self.convs, self.norms)):
            out.update(c.params(f"{prefix}.conv{i}"))
            out.update(n.params(f"{prefix}.norm{i}"))
        out.update(self.cls.params(f"{prefix}.cls"))
        return out


def seg_loss(scores: Tensor, target: SegTarget) -> Tensor:
    """Per-channel binary cross-entropy, summed over channels and
    averaged over cells."""
    grid = target.grid if isinstance(target, SegTarget) else np.asarray(target)
    if scores.shape != grid.shape:
        raise ShapeError(f"seg_loss: scores {scores.shape} vs target {grid.shape}")
    y = T.constant(grid)
    one = T.constant(1.0)
    pos = T.mul(y, F.log_guarded(scores))
    neg = T.mul(F.sub(one, y), F.log_guarded(F.sub(one, scores)))
    cells = grid.shape[0] * grid.shape[1]
    return T.scale(T.sum_(T.add(pos, neg)), -1.0 / cells)


def build_semantic_map(scores, teacher: TeacherEmbedder) -> Tensor:
    """Per-cell frozen embedding of the argmax class (background -> 0).

    Non-differentiable by construction: the result is a constant, so
    gradients reach the segmentation head only through seg_loss. Ties
    break to the lowest class index.
    """
    s = scores.data if isinstance(scores, Tensor) else np.asarray(scores)
    ids = np.argmax(s, axis=2)
    return T.constant(teacher.table[ids])


class Aggregate:
    """f_agg = concat(Wv * v, Ws * e) along channels; d = 2 * c'."""

    def __init__(self, rng, c_reduced: int):
        self.wv = Conv(rng, 1, 1, c_reduced, c_reduced)
        self.ws = Conv(rng, 1, 1, c_reduced, c_reduced)

    def __call__(self, v: Tensor, e: Tensor) -> Tensor:
        if v.shape[:2] != e.shape[:2]:
            raise ShapeError(f"aggregate: spatial mismatch {v.shape} vs {e.shape}")
        return T.concat([self.wv(v), self.ws(e)], axis=2)

    def params(self, prefix: str) -> dict:
        return {**self.wv.params(f"{prefix}.wv"), **self.ws.params(f"{prefix}.ws")}


class FeatureNet:
    """Stem + reduction + segmentation + aggregation, bundled."""

    def __init__(self, rng, n_classes: int, d: int, stem_widths=None,
                 use_seg: bool = True):
        if d % 2:
            raise ShapeError(f"model width must be even, got {d}")
        widths = tuple(stem_widths) if stem_widths else (max(4, d // 4), max(4, d // 2), d)
        if widths[-1] != d:
            raise ShapeError(f"stem must end at width {d}, got {widths}")
        self.d = d
        self.c_reduced = d // 2
        self.n_classes = n_classes
        self.use_seg = use_seg
        self.stem = ConvStem(rng, widths)
        self.reduce = ChannelReduce(rng, d, self.c_reduced)
        self.seg = SegHead(rng, self.c_reduced, n_classes) if use_seg else None
        self.agg = Aggregate(rng, self.c_reduced)

    def __call__(self, image: Tensor, teacher: TeacherEmbedder,
                 st: RunState = EVAL) -> dict:
        v = self.stem(image)
        hgt, wdt, _ = v.shape
        gap = T.reshape(T.mean(T.reshape(v, (hgt * wdt, self.d)), axis=0), (1, self.d))
        v_r = self.reduce(v)
        if self.use_seg:
            seg_scores = self.seg(v_r)
            e_map = build_semantic_map(seg_scores, teacher)
        else:
            seg_scores = None
            e_map = T.constant(np.zeros((hgt, wdt, self.c_reduced)))
        f_agg = self.agg(v_r, e_map)
        return {
            "v": v,
            "gap": gap,
            "v_reduced": v_r,
            "seg_scores": seg_scores,
            "e_map": e_map,
            "f_agg": f_agg,
        }

    def params(self, prefix: str = "feat") -> dict:
        out = {}
        out.update(self.stem.params(f"{prefix}.stem"))
        out.update(self.reduce.params(f"{prefix}.reduce"))
        if self.seg:
            out.update(self.seg.params(f"{prefix}.seg"))
        out.update(self.agg.params(f"{prefix}.agg"))
        return out
