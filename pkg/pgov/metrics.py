#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""Zero-shot segmentation and segmentation metrics.

Usage:
    predicted = segment_scene(params, scene, eval_vocab, embeddings,
                              room_extent=extent)
    labels = remap_vocab([eval_vocab[i] for i in predicted], categories,
                         synonyms)
    matrix = build_confusion(labels, gt, len(categories))
    report = attach_split(compute_metrics(matrix), base_ids, novel_ids)

Predictions that map to no evaluation category are UNMATCHED; they count
as false negatives of their ground-truth class.

"""
import dataclasses
import math
import typing
import numpy as np
import pgov.embedding
import pgov.errors
import pgov.scene_synth

IGNORE_ID = -1
UNMATCHED = -2


def segment_scene(params: pgov.embedding.EncoderParams,
                  scene: pgov.scene_synth.GlobalScene,
                  eval_vocab: typing.Sequence[str],
                  embeddings: pgov.embedding.TextEmbeddingTable, *,
                  room_extent: typing.Sequence[float],
                  encoder: pgov.embedding.PointEncoder =
                  pgov.embedding.MLP_ENCODER) -> np.ndarray:
    """Nearest entity (highest cosine) per point; lower index on ties.

    Raises:
        EmptyVocabularyError: If eval_vocab is empty.

    """
    if len(eval_vocab) == 0:
        raise pgov.errors.EmptyVocabularyError('evaluation vocabulary is '
                                               'empty')
    features, _ = encoder.encode(params, pgov.scene_synth.scene_inputs(
        scene.positions, scene.colors, room_extent))
    cosines = pgov.embedding.normalize_rows(features) \
        @ embeddings.matrix(eval_vocab).T
    return np.argmax(cosines, axis=1).astype(np.int64)


def remap_vocab(pred_entities: typing.Sequence[str],
                eval_categories: typing.Sequence[str],
                synonyms: typing.Mapping[str, str]) -> np.ndarray:
    """Map predicted entity strings to evaluation category indices.

    Exact matches win over synonyms; strings matching neither are
    UNMATCHED.

    """
    index = {name: i for i, name in enumerate(eval_categories)}
    lookup = {}
    for name in dict.fromkeys(pred_entities):
        if name in index:
            lookup[name] = index[name]
        else:
            lookup[name] = index.get(synonyms.get(name), UNMATCHED)
    return np.array([lookup[name] for name in pred_entities],
                    dtype=np.int64)


@dataclasses.dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """K x K counts (rows ground truth, columns prediction) plus the
    UNMATCHED predictions per ground-truth class."""
    counts: np.ndarray
    unmatched: np.ndarray

    @property
    def total(self) -> int:
        """Number of evaluated points."""
        return int(self.counts.sum() + self.unmatched.sum())


def build_confusion(pred: np.ndarray, gt: np.ndarray, n_classes: int,
                    ignore_id: int = IGNORE_ID) -> ConfusionMatrix:
    """Tally predictions against ground truth.

    Points with gt == ignore_id are skipped; negative predictions
    (UNMATCHED) go to the unmatched column of their gt class.

    Raises:
        OutOfRangeLabelError: If a label is outside [0, n_classes) and
        not a marker.

    """
    pred = np.asarray(pred, dtype=np.int64)
    gt = np.asarray(gt, dtype=np.int64)
    if pred.shape != gt.shape:
        raise ValueError(f'{len(pred)} predictions for {len(gt)} labels')
    keep = gt != ignore_id
    pred, gt = pred[keep], gt[keep]
    bad_gt = (gt < 0) | (gt >= n_classes)
    bad_pred = (pred >= n_classes) | ((pred < 0) & (pred != UNMATCHED)
                                      & (pred != ignore_id))
    if np.any(bad_gt) or np.any(bad_pred):
        raise pgov.errors.OutOfRangeLabelError(
            f'labels outside [0, {n_classes}): gt '
            f'{np.unique(gt[bad_gt]).tolist()}, pred '
            f'{np.unique(pred[bad_pred]).tolist()}')
    matched = pred >= 0
    counts = np.bincount(gt[matched] * n_classes + pred[matched],
                         minlength=n_classes * n_classes)
    unmatched = np.bincount(gt[~matched], minlength=n_classes)
    return ConfusionMatrix(counts.reshape(n_classes, n_classes), unmatched)


@dataclasses.dataclass(frozen=True, eq=False)
class EvalReport:
    """Per-class and mean scores on the 0-1 scale.

    Instance attributes:
        iou: per class, NaN for excluded classes
        accuracy: per class, NaN for classes absent from the ground truth
        included: classes present in gt or predictions
        miou, macc: unweighted means over included / present classes
        unmatched: UNMATCHED predictions per gt class
        miou_base, miou_novel, hiou: set by attach_split

    """
    iou: np.ndarray
    accuracy: np.ndarray
    included: np.ndarray
    miou: float
    macc: float
    unmatched: np.ndarray
    miou_base: typing.Optional[float] = None
    miou_novel: typing.Optional[float] = None
    hiou: typing.Optional[float] = None


def compute_metrics(matrix: ConfusionMatrix) -> EvalReport:
    """IoU_k = TP / (TP + FP + FN), Acc_k = TP / (TP + FN).

    mIoU averages over classes present in the ground truth or the
    predictions. mAcc averages over classes present in the ground truth
    only; accuracy is undefined for a class that is only predicted, and
    its false positives lower the IoU of that class instead.

    Raises:
        EmptyMatrixError: If no point was evaluated.

    """
    if matrix.total == 0:
        raise pgov.errors.EmptyMatrixError('no evaluated points')
    counts = matrix.counts
    true_pos = np.diag(counts)
    gt_total = counts.sum(axis=1) + matrix.unmatched
    pred_total = counts.sum(axis=0)
    included = (gt_total + pred_total) > 0
    present = gt_total > 0
    n_classes = len(true_pos)
    iou = np.full(n_classes, np.nan)
    accuracy = np.full(n_classes, np.nan)
    for k in range(n_classes):
        if included[k]:
            union = gt_total[k] + pred_total[k] - true_pos[k]
            iou[k] = float(true_pos[k]) / float(union)
        if present[k]:
            accuracy[k] = float(true_pos[k]) / float(gt_total[k])
    return EvalReport(iou=iou, accuracy=accuracy, included=included,
                      miou=math.fsum(iou[included].tolist())
                      / int(included.sum()),
                      macc=math.fsum(accuracy[present].tolist())
                      / int(present.sum()),
                      unmatched=np.array(matrix.unmatched))


def compute_hiou(miou_base: float, miou_novel: float) -> float:
    """Harmonic mean of base and novel mIoU; 0 if both are 0."""
    if miou_base + miou_novel == 0:
        return 0.0
    return 2.0 * miou_base * miou_novel / (miou_base + miou_novel)


def attach_split(report: EvalReport, base_ids: typing.Sequence[int],
                 novel_ids: typing.Sequence[int]) -> EvalReport:
    """Add base/novel mIoU and hIoU; excluded classes are skipped."""
    def split_miou(ids):
        values = [report.iou[i] for i in ids if report.included[i]]
        return math.fsum(values) / len(values) if values else 0.0

    base = split_miou(base_ids)
    novel = split_miou(novel_ids)
    return dataclasses.replace(report, miou_base=base, miou_novel=novel,
                               hiou=compute_hiou(base, novel))
