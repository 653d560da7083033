#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""Alignment and consistency losses, the AdamW optimizer and both
curriculum stages.

Stage 1 trains on partial clouds: per step a window of consecutive frames
of one scene; the alignment loss pulls point features toward the text
embedding of their pixel entity and the consistency loss pulls features
of the same physical point in adjacent frames together. Stage 2 trains
on global scenes against accepted pseudo labels.

Usage:
    params, log = pretrain_stage(scene_clouds, embeddings, params, config,
                                 room_extent=extent)
    params, log = finetune_stage(inputs, pseudo_labels, embeddings, params,
                                 config)

Loss logs are lists of LossRow (epoch, step, alignment, consistency,
total).

"""
import dataclasses
import logging
import math
import typing
import numpy as np
import pgov.embedding
import pgov.errors
import pgov.geometry
import pgov.helper
import pgov.scene_synth


class LossRow(typing.NamedTuple):
    epoch: int
    step: int
    alignment: float
    consistency: float
    total: float


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """a.b / (|a| |b|), clamped to [-1, 1].

    Raises:
        ZeroVectorError: If a or b is the zero vector.

    """
    norm_a = np.linalg.norm(a)
    norm_b = np.linalg.norm(b)
    if norm_a == 0 or norm_b == 0:
        raise pgov.errors.ZeroVectorError('cosine similarity of a zero '
                                          'vector')
    return float(np.clip(np.dot(a, b) / (norm_a * norm_b), -1.0, 1.0))


def _row_cosines(a: np.ndarray, b: np.ndarray
                 ) -> typing.Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Row-wise cosines plus d cos / d a and d cos / d b."""
    norm_a = np.linalg.norm(a, axis=1, keepdims=True)
    norm_b = np.linalg.norm(b, axis=1, keepdims=True)
    if np.any(norm_a == 0) or np.any(norm_b == 0):
        raise pgov.errors.ZeroVectorError('cosine similarity of a zero '
                                          'vector')
    unit_a = a / norm_a
    unit_b = b / norm_b
    cos = np.sum(unit_a * unit_b, axis=1, keepdims=True)
    d_a = (unit_b - cos * unit_a) / norm_a
    d_b = (unit_a - cos * unit_b) / norm_b
    return np.clip(cos[:, 0], -1.0, 1.0), d_a, d_b


def alignment_loss(point_features: np.ndarray,
                   target_embeddings: np.ndarray
                   ) -> typing.Tuple[float, np.ndarray]:
    """Mean of 1 - cos(feature_i, target_i) and its gradient.

    Raises:
        EmptyBatchError: If there are no rows.

    """
    count = len(point_features)
    if count == 0:
        raise pgov.errors.EmptyBatchError('alignment loss over zero points')
    cos, d_features, _ = _row_cosines(point_features, target_embeddings)
    return float(np.mean(1.0 - cos)), -d_features / count


def consistency_loss(features_1: np.ndarray, features_2: np.ndarray,
                     matches: pgov.geometry.MatchSet
                     ) -> typing.Tuple[float, np.ndarray, np.ndarray]:
    """1 - mean cosine over matched pairs, with gradients for both sides.

    An empty match set gives loss 0 and zero gradients.

    """
    grad_1 = np.zeros_like(features_1)
    grad_2 = np.zeros_like(features_2)
    if len(matches) == 0:
        return 0.0, grad_1, grad_2
    index_1, index_2 = matches.pairs[:, 0], matches.pairs[:, 1]
    cos, d_1, d_2 = _row_cosines(features_1[index_1], features_2[index_2])
    count = len(cos)
    np.add.at(grad_1, index_1, -d_1 / count)
    np.add.at(grad_2, index_2, -d_2 / count)
    return 1.0 - float(np.mean(cos)), grad_1, grad_2


def total_loss(alignment: float, consistency: float,
               lambda_consistency: float) -> float:
    return alignment + lambda_consistency * consistency


@dataclasses.dataclass(frozen=True, eq=False)
class OptimizerState:
    """AdamW moments in the order of EncoderParams.arrays()."""
    first_moments: typing.Tuple[np.ndarray, ...]
    second_moments: typing.Tuple[np.ndarray, ...]
    step: int = 0


def init_optimizer(params: pgov.embedding.EncoderParams) -> OptimizerState:
    zeros = tuple(np.zeros_like(array) for array in params.arrays())
    return OptimizerState(zeros, tuple(np.zeros_like(z) for z in zeros))


def optimizer_step(params: pgov.embedding.EncoderParams,
                   gradients: typing.Sequence[np.ndarray],
                   state: OptimizerState,
                   config: 'pgov.settings.TrainConfig'
                   ) -> typing.Tuple[pgov.embedding.EncoderParams,
                                     OptimizerState]:
    """One AdamW update.

    Bias-corrected adaptive moments; the weight decay is applied to the
    parameters directly (decoupled from the gradient).

    Raises:
        ShapeMismatchError: If gradients or moments do not mirror the
        parameters.

    """
    arrays = params.arrays()
    if len(gradients) != len(arrays) \
            or len(state.first_moments) != len(arrays) \
            or any(g.shape != a.shape or m.shape != a.shape
                   for g, m, a in zip(gradients, state.first_moments,
                                      arrays)):
        raise pgov.errors.ShapeMismatchError('gradients do not mirror the '
                                             'encoder parameters')
    step = state.step + 1
    beta1, beta2 = config.adam_beta1, config.adam_beta2
    rate = config.learning_rate
    new_arrays, first, second = [], [], []
    for array, grad, m, v in zip(arrays, gradients, state.first_moments,
                                 state.second_moments):
        m = beta1 * m + (1.0 - beta1) * grad
        v = beta2 * v + (1.0 - beta2) * grad * grad
        m_hat = m / (1.0 - beta1 ** step)
        v_hat = v / (1.0 - beta2 ** step)
        array = array - rate * config.weight_decay * array \
            - rate * m_hat / (np.sqrt(v_hat) + config.adam_eps)
        new_arrays.append(array)
        first.append(m)
        second.append(v)
    return (params.with_arrays(new_arrays, step=params.step + 1),
            OptimizerState(tuple(first), tuple(second), step))


def _accumulate(total: typing.Optional[typing.List[np.ndarray]],
                gradients: typing.Sequence[np.ndarray]
                ) -> typing.List[np.ndarray]:
    if total is None:
        return [np.array(g, dtype=np.float64) for g in gradients]
    return [t + g for t, g in zip(total, gradients)]


def _frame_windows(n_frames: int, size: int,
                   rng: np.random.Generator) -> typing.List[range]:
    """Consecutive windows of `size` frames with a random phase."""
    phase = int(rng.integers(0, size)) if n_frames > size else 0
    starts = sorted({0, *range(phase, n_frames, size)})
    ends = starts[1:] + [n_frames]
    return [range(start, end) for start, end in zip(starts, ends)]


def adjacent_matches(clouds: typing.Sequence[pgov.geometry.PartialCloud],
                     match_radius: float) -> typing.List[
                         pgov.geometry.MatchSet]:
    """Match sets of the frame pairs (k, k + 1).

    by_id when both clouds carry source ids, by_radius otherwise.

    """
    matches = []
    for first, second in zip(clouds[:-1], clouds[1:]):
        has_ids = all(np.any(c.source_point_ids
                             != pgov.geometry.SENTINEL_NONE)
                      for c in (first, second))
        if has_ids:
            matches.append(pgov.geometry.match_points(first, second,
                                                      'by_id'))
        else:
            matches.append(pgov.geometry.match_points(
                first, second, 'by_radius', match_radius))
    return matches


def pretrain_objective(params: pgov.embedding.EncoderParams,
                       inputs: typing.Sequence[np.ndarray],
                       targets: typing.Sequence[np.ndarray],
                       labeled: typing.Sequence[np.ndarray],
                       matches: typing.Sequence[pgov.geometry.MatchSet],
                       lambda_consistency: float,
                       encoder: pgov.embedding.PointEncoder =
                       pgov.embedding.MLP_ENCODER
                       ) -> typing.Tuple[float, float, typing.List[
                           np.ndarray]]:
    """Stage 1 loss over a window of consecutive frames and its gradient.

    The alignment term averages over frames with a labeled point, the
    consistency term over the pairs (k, k + 1); the gradient is the one
    of alignment + lambda_consistency * consistency.

    Args:
        params: encoder parameters
        inputs: per frame the encoder inputs
        targets: per frame the text embeddings of its labeled points
        labeled: per frame the mask of labeled points
        matches: per frame pair (k, k + 1) the matched points
        lambda_consistency: weight of the consistency term
        encoder: point encoder

    Returns:
        alignment, consistency, gradients (order of
        EncoderParams.arrays())

    """
    features, caches = [], []
    for frame_inputs in inputs:
        frame_features, cache = encoder.encode(params, frame_inputs)
        features.append(frame_features)
        caches.append(cache)
    d_features = [np.zeros_like(f) for f in features]

    alignment = 0.0
    labeled_frames = [f for f, mask in enumerate(labeled) if np.any(mask)]
    if labeled_frames:
        losses = []
        for frame in labeled_frames:
            mask = labeled[frame]
            loss, grad = alignment_loss(features[frame][mask],
                                        targets[frame])
            losses.append(loss)
            d_features[frame][mask] += grad / len(labeled_frames)
        alignment = math.fsum(losses) / len(losses)

    consistency = 0.0
    if matches:
        losses = []
        weight = lambda_consistency / len(matches)
        for frame, pairs in enumerate(matches):
            loss, grad_1, grad_2 = consistency_loss(
                features[frame], features[frame + 1], pairs)
            losses.append(loss)
            d_features[frame] += weight * grad_1
            d_features[frame + 1] += weight * grad_2
        consistency = math.fsum(losses) / len(losses)

    gradients = None
    for cache, d_frame in zip(caches, d_features):
        gradients = _accumulate(gradients, encoder.backward(params, cache,
                                                            d_frame))
    return alignment, consistency, gradients


def pretrain_stage(scene_clouds: typing.Sequence[typing.Sequence[
                       pgov.geometry.PartialCloud]],
                   embeddings: pgov.embedding.TextEmbeddingTable,
                   params: pgov.embedding.EncoderParams,
                   config: 'pgov.settings.TrainConfig', *,
                   room_extent: typing.Sequence[float],
                   encoder: pgov.embedding.PointEncoder =
                   pgov.embedding.MLP_ENCODER
                   ) -> typing.Tuple[pgov.embedding.EncoderParams,
                                     typing.List[LossRow]]:
    """Stage 1: alignment plus consistency on partial clouds.

    Args:
        scene_clouds: per scene the partial clouds in trajectory order;
            consecutive clouds are adjacent frames
        embeddings: text embeddings of the frame entities
        params: initial parameters
        config: training settings (epochs_stage1, batch_size_stage1,
            lambda_consistency, optimizer)
        room_extent: normalizes xyz encoder inputs
        encoder: point encoder

    Returns:
        Trained parameters, loss log (one row per step)

    Raises:
        NoLabelsError: If no cloud has a labeled point.

    """
    inputs, targets, labeled = [], [], []
    for clouds in scene_clouds:
        inputs.append([pgov.scene_synth.scene_inputs(c.positions, c.colors,
                                                     room_extent)
                       for c in clouds])
        labeled.append([c.labeled for c in clouds])
        targets.append([embeddings.matrix(c.vocabulary)[
            c.entity_ids[c.labeled]] if np.any(c.labeled)
            else np.zeros((0, embeddings.dim)) for c in clouds])
    if not any(np.any(mask) for masks in labeled for mask in masks):
        raise pgov.errors.NoLabelsError('every partial cloud point is '
                                        'unlabeled')
    matches = [adjacent_matches(clouds, config.match_radius)
               for clouds in scene_clouds]
    logging.info('Stage 1: %s scenes, %s frames, %s matched pairs',
                 len(scene_clouds), sum(len(c) for c in scene_clouds),
                 sum(len(m) for scene in matches for m in scene))

    state = init_optimizer(params)
    log = []
    step = 0
    for epoch in range(config.epochs_stage1):
        rng = np.random.default_rng(
            pgov.helper.derive_seed(config.seed, 'stage1', epoch))
        batches = [(scene, window)
                   for scene, clouds in enumerate(scene_clouds)
                   for window in _frame_windows(
                       len(clouds), config.batch_size_stage1, rng)]
        for batch in rng.permutation(len(batches)).tolist():
            scene, window = batches[batch]
            if not any(np.any(labeled[scene][f]) for f in window) \
                    and len(window) < 2:
                continue
            alignment, consistency, gradients = pretrain_objective(
                params, [inputs[scene][f] for f in window],
                [targets[scene][f] for f in window],
                [labeled[scene][f] for f in window],
                [matches[scene][f] for f in window[:-1]],
                config.lambda_consistency, encoder)
            params, state = optimizer_step(params, gradients, state, config)
            total = total_loss(alignment, consistency,
                               config.lambda_consistency)
            log.append(LossRow(epoch, step, alignment, consistency, total))
            logging.debug('Stage 1 step %s (scene %s, frames %s-%s): %.6f',
                          step, scene, window[0], window[-1], total)
            step += 1
        _log_epoch(1, log, epoch)
    return params, log


def finetune_stage(scene_inputs: typing.Sequence[np.ndarray],
                   pseudo_labels: typing.Sequence[
                       'pgov.pseudo_label.PseudoLabelSet'],
                   embeddings: pgov.embedding.TextEmbeddingTable,
                   params: pgov.embedding.EncoderParams,
                   config: 'pgov.settings.TrainConfig', *,
                   encoder: pgov.embedding.PointEncoder =
                   pgov.embedding.MLP_ENCODER
                   ) -> typing.Tuple[pgov.embedding.EncoderParams,
                                     typing.List[LossRow]]:
    """Stage 2: alignment against accepted pseudo labels on global scenes.

    Starts from `params` when config.load_pretrained, otherwise from a
    fresh initialization of the same shape. Each step draws at most
    config.stage2_points_per_scene accepted points from each of
    config.batch_size_stage2 scenes.

    Args:
        scene_inputs: per scene the N x 6 encoder inputs
        pseudo_labels: per scene the pseudo-label set (entity ids index
            its vocabulary)
        embeddings: text embeddings
        params: stage-1 parameters
        config: training settings
        encoder: point encoder

    Returns:
        Trained parameters, loss log (consistency column is 0)

    Raises:
        NoAcceptedLabelsError: If no pseudo label is accepted.

    """
    accepted = [np.nonzero(labels.accepted)[0] for labels in pseudo_labels]
    if sum(len(a) for a in accepted) == 0:
        raise pgov.errors.NoAcceptedLabelsError('no accepted pseudo label')
    if not config.load_pretrained:
        params = pgov.embedding.init_encoder(
            params.layer_sizes,
            pgov.helper.derive_seed(config.seed, 'fresh_init'))
        logging.info('Stage 2 starts from a fresh initialization')
    targets = [embeddings.matrix(labels.vocabulary)
               for labels in pseudo_labels]
    logging.info('Stage 2: %s scenes, %s accepted pseudo labels',
                 len(scene_inputs), sum(len(a) for a in accepted))

    state = init_optimizer(params)
    log = []
    step = 0
    usable = [scene for scene, points in enumerate(accepted) if len(points)]
    for epoch in range(config.epochs_stage2):
        rng = np.random.default_rng(
            pgov.helper.derive_seed(config.seed, 'stage2', epoch))
        order = [usable[i] for i in rng.permutation(len(usable)).tolist()]
        for start in range(0, len(order), config.batch_size_stage2):
            batch = order[start:start + config.batch_size_stage2]
            losses, gradients = [], None
            for scene in batch:
                points = accepted[scene]
                if len(points) > config.stage2_points_per_scene:
                    points = np.sort(rng.choice(
                        points, config.stage2_points_per_scene,
                        replace=False))
                features, cache = encoder.encode(
                    params, scene_inputs[scene][points])
                entity = pseudo_labels[scene].entity_ids[points]
                loss, grad = alignment_loss(features,
                                            targets[scene][entity])
                losses.append(loss)
                gradients = _accumulate(gradients, encoder.backward(
                    params, cache, grad / len(batch)))
            params, state = optimizer_step(params, gradients, state, config)
            alignment = math.fsum(losses) / len(losses)
            log.append(LossRow(epoch, step, alignment, 0.0, alignment))
            step += 1
        _log_epoch(2, log, epoch)
    return params, log


def _log_epoch(stage: int, log: typing.List[LossRow], epoch: int) -> None:
    means = [row for row in epoch_means(log) if row.epoch == epoch]
    if means:
        row = means[0]
        logging.info('Stage %s epoch %s: alignment %.4f, consistency %.4f, '
                     'total %.4f', stage, epoch, row.alignment,
                     row.consistency, row.total)


def epoch_means(log: typing.Sequence[LossRow]) -> typing.List[LossRow]:
    """Mean loss per epoch; `step` holds the number of steps."""
    epochs: typing.Dict[int, typing.List[LossRow]] = {}
    for row in log:
        epochs.setdefault(row.epoch, []).append(row)
    means = []
    for epoch in sorted(epochs):
        rows = epochs[epoch]
        means.append(LossRow(
            epoch, len(rows),
            math.fsum(r.alignment for r in rows) / len(rows),
            math.fsum(r.consistency for r in rows) / len(rows),
            math.fsum(r.total for r in rows) / len(rows)))
    return means


def matched_pair_cosine(params: pgov.embedding.EncoderParams,
                        scene_clouds: typing.Sequence[typing.Sequence[
                            pgov.geometry.PartialCloud]], *,
                        room_extent: typing.Sequence[float],
                        match_radius: float,
                        encoder: pgov.embedding.PointEncoder =
                        pgov.embedding.MLP_ENCODER) -> float:
    """Mean feature cosine over matched pairs of adjacent frames.

    Returns:
        Mean cosine, NaN if no adjacent frames share a point

    """
    cosines = []
    for clouds in scene_clouds:
        features = [encoder.encode(params, pgov.scene_synth.scene_inputs(
            c.positions, c.colors, room_extent))[0] for c in clouds]
        for frame, matches in enumerate(adjacent_matches(clouds,
                                                         match_radius)):
            if len(matches) == 0:
                continue
            cos, _, _ = _row_cosines(features[frame][matches.pairs[:, 0]],
                                     features[frame + 1][
                                         matches.pairs[:, 1]])
            cosines.append(cos)
    if not cosines:
        logging.warning('No matched pairs between adjacent frames')
        return float('nan')
    return math.fsum(np.concatenate(cosines).tolist()) / sum(
        len(c) for c in cosines)
