"""Open-vocabulary querying over the hierarchy plus the evaluation harness.

Relevance follows the two-way softmax against canonical concept
embeddings, taking the worst margin over the canonical set; selection
defaults to a 0.5 threshold with an argmax fallback.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .hierarchy import SuperpointHierarchy
from .types import FormatError, ValidationError

EMBEDDING_MAGIC_LEN = 4  # u32 dimension prefix


@dataclass
class QuerySpec:
    query_embedding: np.ndarray
    canonical_embeddings: np.ndarray  # (C, D)
    levels: Tuple[int, ...] = (3,)
    threshold: Optional[float] = 0.5
    top_k: Optional[int] = None

    def __post_init__(self) -> None:
        q = np.asarray(self.query_embedding, dtype=np.float64)
        c = np.atleast_2d(np.asarray(self.canonical_embeddings, dtype=np.float64))
        if c.shape[0] < 1:
            raise ValidationError("at least one canonical embedding is required")
        qn = np.linalg.norm(q)
        if qn == 0:
            raise ValidationError("query embedding must be nonzero")
        cn = np.linalg.norm(c, axis=1)
        if np.any(cn == 0):
            raise ValidationError("canonical embeddings must be nonzero")
        self.query_embedding = q / qn
        self.canonical_embeddings = c / cn[:, None]
        if not self.levels:
            raise ValidationError("query level set must not be empty")
        for lv in self.levels:
            if lv not in (1, 2, 3):
                raise ValidationError(f"query level {lv} not in {{1, 2, 3}}")


@dataclass
class QueryResult:
    scores: Dict[int, np.ndarray]            # level -> per-superpoint relevance
    selected: Dict[int, np.ndarray]          # level -> selected superpoint ids
    gp_indices: np.ndarray                   # union of selected members
    masks: Dict[int, Tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)


def _stable_logistic(margin: np.ndarray) -> np.ndarray:
    out = np.empty_like(margin, dtype=np.float64)
    pos = margin >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-margin[pos]))
    e = np.exp(margin[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def relevance(sp_features: np.ndarray, spec: QuerySpec) -> np.ndarray:
    """Worst-margin two-way softmax score per superpoint feature row.

    Zero (unqueryable) feature rows score 0 by convention.
    """
    feats = np.atleast_2d(np.asarray(sp_features, dtype=np.float64))
    dot_q = feats @ spec.query_embedding
    dot_c = feats @ spec.canonical_embeddings.T  # (S, C)
    margin = dot_q - dot_c.max(axis=1)
    scores = _stable_logistic(margin)
    zero = np.linalg.norm(feats, axis=1) == 0
    scores[zero] = 0.0
    return scores


def query(hierarchy: SuperpointHierarchy, spec: QuerySpec) -> QueryResult:
    """Score requested levels, select superpoints, materialize the gp set."""
    scores: Dict[int, np.ndarray] = {}
    selected: Dict[int, np.ndarray] = {}
    gp_mask = np.zeros(hierarchy.n_gp, dtype=bool)
    for level in sorted(spec.levels):
        s = relevance(hierarchy.semantic_feature[level], spec)
        scores[level] = s
        if spec.top_k is not None:
            order = np.lexsort((np.arange(s.size), -s))
            chosen = order[: spec.top_k]
            chosen = np.sort(chosen)
        else:
            threshold = 0.5 if spec.threshold is None else spec.threshold
            chosen = np.nonzero(s > threshold)[0]
            if chosen.size == 0 and s.size > 0:
                chosen = np.array([int(np.argmax(s))])  # argmax fallback, lower id wins ties
        selected[level] = chosen
        if chosen.size:
            gp_mask |= np.isin(hierarchy.levels[level], chosen.astype(hierarchy.levels[level].dtype))
    return QueryResult(scores=scores, selected=selected, gp_indices=np.nonzero(gp_mask)[0])


def evaluate_2d(
    pred_masks: Sequence[np.ndarray], gt_masks: Sequence[np.ndarray]
) -> Tuple[float, float]:
    """(mIoU, mAcc) over per-query binary masks.

    Accuracy per query is the fraction of ground-truth pixels covered;
    queries with empty ground truth are skipped in the accuracy mean.
    """
    ious: List[float] = []
    accs: List[float] = []
    for pred, gt in zip(pred_masks, gt_masks):
        pred = np.asarray(pred, dtype=bool)
        gt = np.asarray(gt, dtype=bool)
        if pred.shape != gt.shape:
            raise ValidationError(f"mask resolution mismatch: {pred.shape} vs {gt.shape}")
        inter = int(np.sum(pred & gt))
        union = int(np.sum(pred | gt))
        ious.append(inter / union if union else 1.0)
        gt_count = int(gt.sum())
        if gt_count:
            accs.append(inter / gt_count)
    miou = float(np.mean(ious)) if ious else 0.0
    macc = float(np.mean(accs)) if accs else 0.0
    return miou, macc


def evaluate_3d(
    pred_labels: np.ndarray,
    gt_labels: np.ndarray,
    class_subset: Optional[Sequence[int]] = None,
) -> Tuple[float, float]:
    """(mIoU, mAcc) for per-primitive class labels, averaged over classes
    present in the ground truth (restricted to class_subset if given)."""
    pred = np.asarray(pred_labels)
    gt = np.asarray(gt_labels)
    if pred.shape != gt.shape:
        raise ValidationError(f"label array length mismatch: {pred.shape} vs {gt.shape}")
    classes = np.unique(gt)
    if class_subset is not None:
        classes = np.array([c for c in classes if c in set(class_subset)])
    ious: List[float] = []
    accs: List[float] = []
    for c in classes:
        pred_c = pred == c
        gt_c = gt == c
        inter = int(np.sum(pred_c & gt_c))
        union = int(np.sum(pred_c | gt_c))
        ious.append(inter / union if union else 1.0)
        accs.append(inter / int(gt_c.sum()))
    miou = float(np.mean(ious)) if ious else 0.0
    macc = float(np.mean(accs)) if accs else 0.0
    return miou, macc


def save_embedding(vec: np.ndarray, path: str | Path) -> None:
    vec = np.asarray(vec, dtype=np.float32).ravel()
    Path(path).write_bytes(struct.pack("<I", vec.size) + vec.astype("<f4").tobytes())


def load_embedding(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 4:
        raise FormatError("embedding file truncated")
    (d,) = struct.unpack("<I", data[:4])
    if len(data) < 4 + 4 * d:
        raise FormatError(f"embedding file truncated: expected {d} floats")
    return np.frombuffer(data[4:4 + 4 * d], dtype="<f4").astype(np.float64)
