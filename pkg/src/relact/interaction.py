"""Relation-to-interaction transfer and the interaction decoder heads.

The per-query hidden features of the three relation branches are
concatenated, projected, and run through a self-attention encoder; the
result feeds the interaction decoder either directly or fused with the
encoded image sequence by cross-attention. Interaction queries likewise
cross-attend the relation queries before decoding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .attention import EVAL, Encoder, MLP, RunState
from .boxes import Box
from .relation import RelOutputs
from .tensor import ShapeError, Tensor


@dataclass
class HoiTuple:
    """(human box, human score, action scores, object box, object scores)."""

    human_box: Box
    human_score: float
    act_scores: np.ndarray
    obj_box: Box
    obj_scores: np.ndarray


@dataclass
class HoiOutputs:
    boxes_h: Tensor
    logit_h: Tensor
    prob_h: Tensor
    logits_a: Tensor
    probs_a: Tensor
    boxes_o: Tensor
    logits_o: Tensor
    probs_o: Tensor

    def tuples(self) -> list:
        out = []
        for i in range(self.boxes_h.shape[0]):
            out.append(HoiTuple(
                human_box=Box(*self.boxes_h.data[i]),
                human_score=float(self.prob_h.data[i, 0]),
                act_scores=self.probs_a.data[i].copy(),
                obj_box=Box(*self.boxes_o.data[i]),
                obj_scores=self.probs_o.data[i].copy(),
            ))
        return out


class R2ITransform:
    """Project concat(hidden_s, hidden_r, hidden_o) to width d and run a
    self-attention encoder over the query axis."""

    def __init__(self, rng, d: int, heads: int, layers: int, ffn_mult: int = 4,
                 pos_mode: str = "per_layer"):
        self.d = d
        self.proj = MLP(rng, 3 * d, [], d)  # single linear transformation
        self.encoder = Encoder(rng, d, heads, layers, ffn_mult, pos_mode)

    def __call__(self, rel: RelOutputs, pos, st: RunState = EVAL) -> Tensor:
        for name in ("hid_s", "hid_r", "hid_o"):
            if getattr(rel, name) is None:
                raise ShapeError(f"relation outputs missing hidden features ({name})")
        cat = T.concat([rel.hid_s, rel.hid_r, rel.hid_o], axis=1)
        x, _ = self.proj(cat)
        return self.encoder.forward_sequence(x, pos, st)

    def params(self, prefix: str) -> dict:
        return {
            **self.proj.params(f"{prefix}.proj"),
            **self.encoder.params(f"{prefix}.enc"),
        }


class HoiHead:
    """Five branches; subject classification is a scalar human score."""

    def __init__(self, rng, d: int, n_actions: int, n_obj_classes: int):
        self.n_actions = n_actions
        self.n_obj_classes = n_obj_classes
        self.box_h = MLP(rng, d, [d, d], 4)
        self.cls_h = MLP(rng, d, [d], 1)
        self.cls_a = MLP(rng, d, [d], n_actions + 1)
        self.box_o = MLP(rng, d, [d, d], 4)
        self.cls_o = MLP(rng, d, [d], n_obj_classes + 1)

    def __call__(self, h_hoi: Tensor) -> HoiOutputs:
        bh, _ = self.box_h(h_hoi)
        bo, _ = self.box_o(h_hoi)
        lh, _ = self.cls_h(h_hoi)
        la, _ = self.cls_a(h_hoi)
        lo, _ = self.cls_o(h_hoi)
        return HoiOutputs(
            boxes_h=T.sigmoid(bh), logit_h=lh, prob_h=T.sigmoid(lh),
            logits_a=la, probs_a=T.softmax(la),
            boxes_o=T.sigmoid(bo), logits_o=lo, probs_o=T.softmax(lo),
        )

    def params(self, prefix: str) -> dict:
        return {
            **self.box_h.params(f"{prefix}.box_h"),
            **self.cls_h.params(f"{prefix}.cls_h"),
            **self.cls_a.params(f"{prefix}.cls_a"),
            **self.box_o.params(f"{prefix}.box_o"),
            **self.cls_o.params(f"{prefix}.cls_o"),
        }

    def classifier_finals(self) -> dict:
        return {
            "obj": [self.cls_o.layers[-1]],
            "act": [self.cls_a.layers[-1]],
        }
