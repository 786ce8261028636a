"""The unified relation + interaction pipeline.

Forward path: conv stem -> channel reduction -> box-level segmentation
-> per-cell class embeddings -> aggregation -> encoder with a global
token -> relation decoder and 5-tuple heads -> relation-to-interaction
transform -> feature and query transfer -> interaction decoder and
heads. Ablation flags rewire exactly one path each.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .attention import (
    EVAL,
    CrossAttnStack,
    Decoder,
    Encoder,
    RunState,
    sinusoidal_positions,
)
from .config import ModelConfig
from .embeddings import TeacherEmbedder
from .features import STRIDE, FeatureNet
from .interaction import HoiHead, HoiOutputs, R2ITransform
from .relation import RelationHead, RelOutputs, init_classifier, vl_alignment_loss
from .tensor import Tensor


@dataclass
class ModelOut:
    f_agg: Tensor
    gap: Tensor
    seg_scores: Tensor | None
    e_map: Tensor
    f_en: Tensor
    rel: RelOutputs
    f_r2i: Tensor | None
    hoi: HoiOutputs | None
    teacher_img: np.ndarray
    grid_hw: tuple


class JointModel:
    def __init__(self, cfg: ModelConfig):
        cfg.validate()
        self.cfg = cfg
        d = cfg.d
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 42]))

        self.map_teacher = TeacherEmbedder(
            cfg.n_obj_classes, d // 2, cfg.teacher_seed, mode=cfg.hss_mode)
        self.obj_teacher = TeacherEmbedder(cfg.n_obj_classes, d, cfg.teacher_seed + 1)
        self.rel_teacher = TeacherEmbedder(cfg.n_predicates, d, cfg.teacher_seed + 2)
        self.act_teacher = TeacherEmbedder(cfg.n_actions, d, cfg.teacher_seed + 3)

        self.features = FeatureNet(rng, cfg.n_obj_classes, d, use_seg=not cfg.no_hss)
        self.encoder = Encoder(rng, d, cfg.heads, cfg.enc_layers, cfg.ffn_mult,
                               cfg.pos_mode)
        self.rel_queries = Tensor(0.5 * rng.standard_normal((cfg.n_rel_queries, d)))
        self.rel_decoder = Decoder(rng, d, cfg.heads, cfg.rel_dec_layers,
                                   cfg.ffn_mult, cfg.pos_mode)
        self.rel_head = RelationHead(rng, d, cfg.n_obj_classes, cfg.n_predicates)

        self.r2i = R2ITransform(rng, d, cfg.heads, cfg.r2i_layers, cfg.ffn_mult,
                                cfg.pos_mode)
        self.feat_transfer = CrossAttnStack(rng, d, cfg.heads,
                                            cfg.feat_transfer_layers)
        self.hoi_queries = (None if cfg.rel_q
                            else Tensor(0.5 * rng.standard_normal((cfg.n_hoi_queries, d))))
        self.query_transfer = CrossAttnStack(rng, d, cfg.heads,
                                             cfg.query_transfer_layers)
        self.hoi_decoder = Decoder(rng, d, cfg.heads, cfg.hoi_dec_layers,
                                   cfg.ffn_mult, cfg.pos_mode)
        self.hoi_head = HoiHead(rng, d, cfg.n_actions, cfg.n_obj_classes)

        if cfg.classifier_init == "teacher":
            for table, finals in (
                (self.obj_teacher, self.rel_head.classifier_finals()["obj"]),
                (self.rel_teacher, self.rel_head.classifier_finals()["rel"]),
                (self.obj_teacher, self.hoi_head.classifier_finals()["obj"]),
                (self.act_teacher, self.hoi_head.classifier_finals()["act"]),
            ):
                for lin in finals:
                    init_classifier(lin, "teacher", table)

        self.rel_qpos = Tensor(sinusoidal_positions(cfg.n_rel_queries, d))
        n_hq = cfg.n_rel_queries if cfg.rel_q else cfg.n_hoi_queries
        self.hoi_qpos = Tensor(sinusoidal_positions(n_hq, d))
        self._enc_pos = {}

    # -- positions ---------------------------------------------------------

    def enc_positions(self, hw: int) -> Tensor:
        if hw not in self._enc_pos:
            self._enc_pos[hw] = Tensor(
                sinusoidal_positions(hw + 1, self.cfg.d, reserve_first=True))
        return self._enc_pos[hw]

    # -- forward -----------------------------------------------------------

    def forward(self, raster: np.ndarray, st: RunState = EVAL,
                with_hoi: bool = True, hoi_detach: bool = False) -> ModelOut:
        cfg = self.cfg
        image = T.constant(np.asarray(raster, dtype=np.float64))
        feats = self.features(image, self.map_teacher, st)
        hgt, wdt, _ = feats["f_agg"].shape
        pos = self.enc_positions(hgt * wdt)
        f_en = self.encoder.encode(feats["f_agg"], feats["gap"], pos, st)

        f_sg = self.rel_decoder.decode(f_en, self.rel_queries, self.rel_qpos,
                                       pos, st)
        rel = self.rel_head(f_sg)

        f_r2i = None
        hoi = None
        if with_hoi:
            detach = (lambda t: T.constant(t.data)) if hoi_detach else (lambda t: t)
            grid_pos = T.slice_(pos, (slice(1, hgt * wdt + 1),))
            f_en_h = detach(f_en)
            rel_h = rel
            if hoi_detach:
                rel_h = RelOutputs(**{
                    k: (detach(v) if isinstance(v, Tensor) else v)
                    for k, v in vars(rel).items()
                })
            if cfg.no_r2itr:
                memory = T.slice_(f_en_h, (slice(1, hgt * wdt + 1),))
                mem_pos = grid_pos
            else:
                f_r2i = self.r2i(rel_h, self.rel_qpos, st)
                if cfg.no_fetr:
                    memory = f_r2i
                    mem_pos = self.rel_qpos
                else:
                    grid_feat = T.slice_(f_en_h, (slice(1, hgt * wdt + 1),))
                    memory = self.feat_transfer(grid_feat, f_r2i,
                                                pos_q=grid_pos,
                                                pos_k=self.rel_qpos, st=st)
                    mem_pos = grid_pos
            if cfg.rel_q:
                queries = detach(self.rel_queries)
            elif cfg.no_qutr:
                queries = self.hoi_queries
            else:
                queries = self.query_transfer(self.hoi_queries,
                                              detach(self.rel_queries),
                                              pos_q=self.hoi_qpos,
                                              pos_k=self.rel_qpos, st=st)
            h_hoi = self.hoi_decoder.decode(memory, queries, self.hoi_qpos,
                                            mem_pos, st)
            hoi = self.hoi_head(h_hoi)

        teacher_img = self.map_teacher.embed_image(raster, width=cfg.d)
        return ModelOut(
            f_agg=feats["f_agg"], gap=feats["gap"],
            seg_scores=feats["seg_scores"], e_map=feats["e_map"],
            f_en=f_en, rel=rel, f_r2i=f_r2i, hoi=hoi,
            teacher_img=teacher_img, grid_hw=(hgt, wdt),
        )

    def align_loss(self, out: ModelOut) -> Tensor:
        return vl_alignment_loss(out.f_en, out.f_agg, out.teacher_img,
                                 self.cfg.vl_mode)

    def predict_relations(self, raster: np.ndarray) -> list:
        """Decoded 5-tuples for one image, inference mode."""
        return self.forward(raster, EVAL, with_hoi=False).rel.tuples()

    def predict_hois(self, raster: np.ndarray) -> list:
        out = self.forward(raster, EVAL, with_hoi=True)
        return out.hoi.tuples()

    # -- parameters ----------------------------------------------------------

    def params(self) -> dict:
        out = {}
        out.update(self.features.params("feat"))
        out.update(self.encoder.params("enc"))
        out["q_rel"] = self.rel_queries
        out.update(self.rel_decoder.params("rel_dec"))
        out.update(self.rel_head.params("rel"))
        out.update(self.r2i.params("r2i"))
        out.update(self.feat_transfer.params("fetr"))
        if self.hoi_queries is not None:
            out["q_hoi"] = self.hoi_queries
        out.update(self.query_transfer.params("qutr"))
        out.update(self.hoi_decoder.params("hoi_dec"))
        out.update(self.hoi_head.params("hoi"))
        return out

    @staticmethod
    def param_group(name: str) -> str:
        if name.startswith("feat.stem"):
            return "backbone"
        if name.startswith(("r2i", "fetr", "qutr", "hoi_dec", "hoi")) or name == "q_hoi":
            return "hoi"
        return "sgg"

    def classifier_param_names(self) -> set:
        finals = []
        for group in (self.rel_head.classifier_finals(),
                      self.hoi_head.classifier_finals()):
            for lins in group.values():
                finals.extend(lins)
        ids = {id(l.w): None for l in finals} | {id(l.b): None for l in finals}
        return {name for name, p in self.params().items() if id(p) in ids}

    def frozen_table_digests(self) -> dict:
        return {
            "map": self.map_teacher.digest(),
            "obj": self.obj_teacher.digest(),
            "rel": self.rel_teacher.digest(),
            "act": self.act_teacher.digest(),
        }

    def weights_digest(self) -> str:
        h = hashlib.sha256()
        for name in sorted(self.params()):
            h.update(name.encode())
            h.update(np.ascontiguousarray(self.params()[name].data, dtype="<f8").tobytes())
        return h.hexdigest()

    def load_blobs(self, blobs: dict):
        params = self.params()
        missing = set(params) - set(blobs)
        if missing:
            raise ValueError(f"checkpoint missing parameters: {sorted(missing)[:5]} ...")
        for name, p in params.items():
            arr = blobs[name]
            if arr.shape != p.data.shape:
                raise ValueError(
                    f"parameter {name}: checkpoint shape {arr.shape} != {p.data.shape}")
            p.data[...] = arr
