"""Relation decoding heads and the visual-linguistic alignment loss.

Every decoded query feeds five parallel MLP branches: subject box,
subject class, predicate class, object box, object class. Box branches
are 3-layer projections squashed into the unit square; class branches
are 2-layer so a penultimate hidden activation exists for the
relation-to-interaction transfer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import funcs as F
from . import tensor as T
from .attention import MLP
from .boxes import Box
from .embeddings import TeacherEmbedder
from .tensor import Tensor


@dataclass
class RelTuple:
    """(subject box, subject scores, predicate scores, object box,
    object scores) plus the per-branch hidden features."""

    subj_box: Box
    subj_scores: np.ndarray
    rel_scores: np.ndarray
    obj_box: Box
    obj_scores: np.ndarray
    hidden_s: np.ndarray
    hidden_r: np.ndarray
    hidden_o: np.ndarray


@dataclass
class RelOutputs:
    """Training-side view: one tensor per branch over all queries."""

    boxes_s: Tensor
    logits_s: Tensor
    probs_s: Tensor
    logits_r: Tensor
    probs_r: Tensor
    boxes_o: Tensor
    logits_o: Tensor
    probs_o: Tensor
    hid_s: Tensor
    hid_r: Tensor
    hid_o: Tensor

    def tuples(self) -> list:
        out = []
        for i in range(self.boxes_s.shape[0]):
            out.append(RelTuple(
                subj_box=Box(*self.boxes_s.data[i]),
                subj_scores=self.probs_s.data[i].copy(),
                rel_scores=self.probs_r.data[i].copy(),
                obj_box=Box(*self.boxes_o.data[i]),
                obj_scores=self.probs_o.data[i].copy(),
                hidden_s=self.hid_s.data[i].copy(),
                hidden_r=self.hid_r.data[i].copy(),
                hidden_o=self.hid_o.data[i].copy(),
            ))
        return out


class RelationHead:
    def __init__(self, rng, d: int, n_obj_classes: int, n_predicates: int):
        self.n_obj_classes = n_obj_classes
        self.n_predicates = n_predicates
        self.box_s = MLP(rng, d, [d, d], 4)
        self.cls_s = MLP(rng, d, [d], n_obj_classes + 1)
        self.cls_r = MLP(rng, d, [d], n_predicates + 1)
        self.box_o = MLP(rng, d, [d, d], 4)
        self.cls_o = MLP(rng, d, [d], n_obj_classes + 1)

    def __call__(self, f_sg: Tensor) -> RelOutputs:
        bs, _ = self.box_s(f_sg)
        bo, _ = self.box_o(f_sg)
        ls, hs = self.cls_s(f_sg)
        lr_, hr = self.cls_r(f_sg)
        lo, ho = self.cls_o(f_sg)
        return RelOutputs(
            boxes_s=T.sigmoid(bs), logits_s=ls, probs_s=T.softmax(ls),
            logits_r=lr_, probs_r=T.softmax(lr_),
            boxes_o=T.sigmoid(bo), logits_o=lo, probs_o=T.softmax(lo),
            hid_s=hs[-1], hid_r=hr[-1], hid_o=ho[-1],
        )

    def params(self, prefix: str) -> dict:
        return {
            **self.box_s.params(f"{prefix}.box_s"),
            **self.cls_s.params(f"{prefix}.cls_s"),
            **self.cls_r.params(f"{prefix}.cls_r"),
            **self.box_o.params(f"{prefix}.box_o"),
            **self.cls_o.params(f"{prefix}.cls_o"),
        }

    def classifier_finals(self) -> dict:
        """Final classification layers, keyed by the table they pair with."""
        return {
            "obj": [self.cls_s.layers[-1], self.cls_o.layers[-1]],
            "rel": [self.cls_r.layers[-1]],
        }


def init_classifier(final_linear, mode: str, teacher: TeacherEmbedder | None = None):
    """Initialize a classifier's final layer.

    'random' keeps the existing seeded init; 'teacher' copies the frozen
    class-embedding rows into the weight columns (bias zeroed), after
    which the layer trains normally.
    """
    if mode == "random":
        return
    if mode != "teacher":
        raise ValueError(f"unknown classifier init mode {mode!r}")
    if teacher is None:
        raise ValueError("teacher mode needs an embedding table")
    w = final_linear.w
    n_out = w.shape[1]
    if teacher.table.shape[0] != n_out:
        raise ValueError(
            f"classifier has {n_out} classes but table has {teacher.table.shape[0]} rows"
        )
    if teacher.table.shape[1] != w.shape[0]:
        raise ValueError(
            f"classifier width {w.shape[0]} != table width {teacher.table.shape[1]}"
        )
    w.data[...] = teacher.table.T
    final_linear.b.data[...] = 0.0


def vl_alignment_loss(f_en: Tensor, f_agg: Tensor, teacher_img: np.ndarray,
                      mode: str = "pool") -> Tensor:
    """L1 distance between the frozen image embedding and either the
    encoded global token ('cls') or the mean of the encoder inputs
    ('pool')."""
    if mode == "cls":
        feat = T.reshape(T.slice_(f_en, (slice(0, 1),)), (f_en.shape[1],))
    elif mode == "pool":
        hgt, wdt, d = f_agg.shape
        feat = T.mean(T.reshape(f_agg, (hgt * wdt, d)), axis=0)
    else:
        raise ValueError(f"unknown alignment mode {mode!r}")
    return F.l1_distance(feat, T.constant(np.asarray(teacher_img)))
