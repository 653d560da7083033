#!/usr/bin/env python3
# -*- coding: utf-8 -*-
import dataclasses
import math
import numpy as np
import pytest
import pgov.configuration
import pgov.embedding
import pgov.errors
import pgov.geometry
import pgov.helper
import pgov.pseudo_label
import pgov.trainer

_EXTENT = (4.0, 4.0, 2.0)


@pytest.fixture
def train_config():
    config = pgov.configuration.build_config(
        pgov.configuration.read_config(None))
    return dataclasses.replace(pgov.configuration.resolve(config).train,
                               epochs_stage1=2, batch_size_stage1=3,
                               epochs_stage2=2, batch_size_stage2=2)


def _numeric(function, array, step=1e-6):
    gradient = np.zeros_like(array)
    for position in np.ndindex(array.shape):
        original = array[position]
        array[position] = original + step
        upper = function()
        array[position] = original - step
        lower = function()
        array[position] = original
        gradient[position] = (upper - lower) / (2 * step)
    return gradient


def _labeled_clouds(cloud_factory, count=4, seed=0):
    rng = np.random.default_rng(seed)
    positions = rng.uniform(0, 2, (12, 3))
    clouds = []
    for frame in range(count):
        visible = np.arange(frame, frame + 8) % 12
        clouds.append(cloud_factory(
            positions[visible], source_ids=visible,
            entity_ids=visible % 2, vocabulary=('chair', 'table'),
            colors=rng.uniform(0, 1, (8, 3)), frame_index=frame))
    return clouds


def test_cosine_similarity():
    assert pgov.trainer.cosine_similarity(np.array([1.0, 0.0]),
                                          np.array([2.0, 0.0])) == 1.0
    assert pgov.trainer.cosine_similarity(np.array([1.0, 0.0]),
                                          np.array([0.0, 3.0])) == 0.0
    with pytest.raises(pgov.errors.ZeroVectorError):
        pgov.trainer.cosine_similarity(np.zeros(2), np.ones(2))


def test_alignment_loss_and_gradient():
    rng = np.random.default_rng(1)
    features = rng.normal(0, 1, (5, 4))
    targets = rng.normal(0, 1, (5, 4))
    loss, grad = pgov.trainer.alignment_loss(features, targets)
    expected = np.mean([1 - pgov.trainer.cosine_similarity(f, t)
                        for f, t in zip(features, targets)])
    assert loss == pytest.approx(expected)
    numeric = _numeric(
        lambda: pgov.trainer.alignment_loss(features, targets)[0], features)
    np.testing.assert_allclose(grad, numeric, atol=1e-7)
    same, _ = pgov.trainer.alignment_loss(targets, 3 * targets)
    assert same == pytest.approx(0.0, abs=1e-12)


def test_alignment_loss_needs_points():
    with pytest.raises(pgov.errors.EmptyBatchError):
        pgov.trainer.alignment_loss(np.zeros((0, 3)), np.zeros((0, 3)))


def test_consistency_loss_and_gradient():
    rng = np.random.default_rng(2)
    first = rng.normal(0, 1, (4, 3))
    second = rng.normal(0, 1, (3, 3))
    matches = pgov.geometry.MatchSet(np.array([[0, 2], [1, 0], [3, 2]]),
                                     'by_id')
    loss, grad_1, grad_2 = pgov.trainer.consistency_loss(first, second,
                                                         matches)
    expected = 1 - np.mean([pgov.trainer.cosine_similarity(first[a],
                                                           second[b])
                            for a, b in matches.pairs])
    assert loss == pytest.approx(expected)

    def value():
        return pgov.trainer.consistency_loss(first, second, matches)[0]
    np.testing.assert_allclose(grad_1, _numeric(value, first), atol=1e-7)
    np.testing.assert_allclose(grad_2, _numeric(value, second), atol=1e-7)
    assert not grad_1[2].any()


def test_consistency_loss_without_matches():
    empty = pgov.geometry.MatchSet(np.zeros((0, 2), dtype=np.int64), 'by_id')
    loss, grad_1, grad_2 = pgov.trainer.consistency_loss(
        np.ones((2, 3)), np.ones((1, 3)), empty)
    assert loss == 0.0
    assert not grad_1.any() and not grad_2.any()


@pytest.mark.parametrize('instance', range(20))
def test_pretrain_gradient_matches_central_differences(instance):
    rng = np.random.default_rng(100 + instance)
    dim = int(rng.integers(3, 9))
    sizes = (6, int(rng.integers(2, 17)), dim)
    params = pgov.embedding.init_encoder(sizes, seed=instance)
    params = params.with_arrays([array + rng.normal(0, 0.1, array.shape)
                                 for array in params.arrays()])
    counts = rng.integers(5, 31, 2)
    inputs = [rng.normal(0, 1, (int(count), 6)) for count in counts]
    labeled = [rng.random(int(count)) < 0.6 for count in counts]
    for mask in labeled:
        mask[0] = True
    targets = [rng.normal(0, 1, (int(np.count_nonzero(mask)), dim))
               for mask in labeled]
    shared = int(rng.integers(1, min(counts) + 1))
    pairs = np.stack([np.sort(rng.choice(counts[0], shared, replace=False)),
                      rng.choice(counts[1], shared, replace=False)], axis=1)
    matches = [pgov.geometry.MatchSet(pairs, 'by_id')]
    lambda_consistency = 0.2

    def total(arrays):
        alignment, consistency, _ = pgov.trainer.pretrain_objective(
            params.with_arrays(arrays), inputs, targets, labeled, matches,
            lambda_consistency)
        return pgov.trainer.total_loss(alignment, consistency,
                                       lambda_consistency)

    _, consistency, analytic = pgov.trainer.pretrain_objective(
        params, inputs, targets, labeled, matches, lambda_consistency)
    assert consistency > 0.0
    arrays = [array.copy() for array in params.arrays()]
    for mine, array in zip(analytic, arrays):
        numeric = _numeric(lambda: total(arrays), array, step=1e-5)
        error = np.abs(mine - numeric) \
            / np.maximum(np.maximum(np.abs(mine), np.abs(numeric)), 1e-5)
        assert error.max() <= 1e-4


def test_total_loss():
    assert pgov.trainer.total_loss(0.5, 0.25, 0.2) == pytest.approx(0.55)
    assert pgov.trainer.total_loss(0.5, 0.25, 0.0) == 0.5


def test_optimizer_first_step(small_params, train_config):
    config = dataclasses.replace(train_config, weight_decay=0.0)
    rng = np.random.default_rng(3)
    gradients = [rng.choice([-1.0, 1.0], a.shape)
                 * rng.uniform(0.5, 2.0, a.shape)
                 for a in small_params.arrays()]
    state = pgov.trainer.init_optimizer(small_params)
    params, state = pgov.trainer.optimizer_step(small_params, gradients,
                                                state, config)
    assert state.step == 1 and params.step == 1
    # bias-corrected first step moves every parameter by about lr
    for before, after, grad in zip(small_params.arrays(), params.arrays(),
                                   gradients):
        np.testing.assert_allclose(after - before,
                                   -config.learning_rate * np.sign(grad),
                                   rtol=1e-5)


def test_optimizer_weight_decay_is_decoupled(small_params, train_config):
    config = dataclasses.replace(train_config, weight_decay=0.5)
    gradients = [np.zeros_like(a) for a in small_params.arrays()]
    params, _ = pgov.trainer.optimizer_step(
        small_params, gradients, pgov.trainer.init_optimizer(small_params),
        config)
    factor = 1 - config.learning_rate * 0.5
    for before, after in zip(small_params.arrays(), params.arrays()):
        np.testing.assert_allclose(after, before * factor)


def test_optimizer_rejects_mismatched_gradients(small_params, train_config):
    gradients = [np.zeros_like(a) for a in small_params.arrays()]
    gradients[1] = np.zeros(7)
    with pytest.raises(pgov.errors.ShapeMismatchError):
        pgov.trainer.optimizer_step(small_params, gradients,
                                    pgov.trainer.init_optimizer(small_params),
                                    train_config)
    with pytest.raises(pgov.errors.ShapeMismatchError):
        pgov.trainer.optimizer_step(small_params, gradients[:2],
                                    pgov.trainer.init_optimizer(small_params),
                                    train_config)


def test_adjacent_matches(cloud_factory):
    clouds = _labeled_clouds(cloud_factory, count=3)
    matches = pgov.trainer.adjacent_matches(clouds, 0.05)
    assert [m.mode for m in matches] == ['by_id', 'by_id']
    assert [len(m) for m in matches] == [7, 7]
    anonymous = [cloud_factory(c.positions) for c in clouds]
    matches = pgov.trainer.adjacent_matches(anonymous, 1e-6)
    assert [m.mode for m in matches] == ['by_radius', 'by_radius']
    assert [len(m) for m in matches] == [7, 7]


def test_pretrain_stage(cloud_factory, train_config):
    clouds = _labeled_clouds(cloud_factory)
    embeddings = pgov.embedding.embed_entities(['chair', 'table'], 4, 0)
    initial = pgov.embedding.init_encoder((6, 5, 4), seed=0)
    params, log = pgov.trainer.pretrain_stage(
        [clouds], embeddings, initial, train_config, room_extent=_EXTENT)
    # 4 frames in windows of 3: two windows per epoch
    assert len(log) == 4
    assert [row.step for row in log] == [0, 1, 2, 3]
    assert params.step == 4
    for row in log:
        assert row.total == pytest.approx(
            row.alignment + train_config.lambda_consistency
            * row.consistency)
    again, _ = pgov.trainer.pretrain_stage(
        [clouds], embeddings, initial, train_config, room_extent=_EXTENT)
    for mine, theirs in zip(params.arrays(), again.arrays()):
        np.testing.assert_array_equal(mine, theirs)


def test_pretrain_reduces_alignment(cloud_factory, train_config):
    clouds = _labeled_clouds(cloud_factory)
    embeddings = pgov.embedding.embed_entities(['chair', 'table'], 4, 0)
    config = dataclasses.replace(train_config, epochs_stage1=60,
                                 learning_rate=0.01, lambda_consistency=0.0)
    _, log = pgov.trainer.pretrain_stage(
        [clouds], embeddings, pgov.embedding.init_encoder((6, 8, 4), 0),
        config, room_extent=_EXTENT)
    means = pgov.trainer.epoch_means(log)
    assert means[-1].alignment < means[0].alignment


def test_pretrain_needs_labels(cloud_factory, small_params, train_config):
    clouds = [cloud_factory(np.zeros((3, 3))) for _ in range(2)]
    embeddings = pgov.embedding.embed_entities([], 4, 0)
    with pytest.raises(pgov.errors.NoLabelsError):
        pgov.trainer.pretrain_stage([clouds], embeddings, small_params,
                                    train_config, room_extent=_EXTENT)


def _pseudo_set(accepted, vocabulary=('chair', 'table')):
    accepted = np.asarray(accepted, dtype=bool)
    count = len(accepted)
    return pgov.pseudo_label.PseudoLabelSet(
        probabilities=None, entity_ids=np.arange(count) % len(vocabulary),
        confidence=np.ones(count), accepted=accepted,
        vocabulary=tuple(vocabulary), voxel_size=0.1, repetitions=1,
        temperature=0.07, confidence_threshold=0.5, context_radius=0.0,
        seed=0)


def test_finetune_stage(small_params, train_config):
    rng = np.random.default_rng(5)
    inputs = [rng.normal(0, 1, (6, 6)) for _ in range(3)]
    labels = [_pseudo_set([True] * 6), _pseudo_set([False] * 6),
              _pseudo_set([True, False] * 3)]
    embeddings = pgov.embedding.embed_entities(['chair', 'table'], 4, 0)
    params, log = pgov.trainer.finetune_stage(inputs, labels, embeddings,
                                              small_params, train_config)
    # two usable scenes in batches of two: one step per epoch
    assert len(log) == 2
    assert all(row.consistency == 0.0 and row.total == row.alignment
               for row in log)
    assert params.step == 2


def test_finetune_initialization(small_params, train_config):
    frozen = dataclasses.replace(train_config, learning_rate=0.0)
    inputs = [np.random.default_rng(6).normal(0, 1, (4, 6))]
    labels = [_pseudo_set([True] * 4)]
    embeddings = pgov.embedding.embed_entities(['chair', 'table'], 4, 0)
    kept, _ = pgov.trainer.finetune_stage(inputs, labels, embeddings,
                                          small_params, frozen)
    for mine, theirs in zip(kept.arrays(), small_params.arrays()):
        np.testing.assert_array_equal(mine, theirs)
    fresh, _ = pgov.trainer.finetune_stage(
        inputs, labels, embeddings, small_params,
        dataclasses.replace(frozen, load_pretrained=False))
    expected = pgov.embedding.init_encoder(
        (6, 5, 4), pgov.helper.derive_seed(frozen.seed, 'fresh_init'))
    for mine, theirs in zip(fresh.arrays(), expected.arrays()):
        np.testing.assert_array_equal(mine, theirs)


def test_finetune_needs_accepted_labels(small_params, train_config):
    embeddings = pgov.embedding.embed_entities(['chair', 'table'], 4, 0)
    with pytest.raises(pgov.errors.NoAcceptedLabelsError):
        pgov.trainer.finetune_stage([np.zeros((2, 6))],
                                    [_pseudo_set([False, False])],
                                    embeddings, small_params, train_config)


def test_epoch_means():
    log = [pgov.trainer.LossRow(0, 0, 1.0, 0.5, 1.1),
           pgov.trainer.LossRow(0, 1, 0.5, 0.0, 0.5),
           pgov.trainer.LossRow(1, 2, 0.25, 0.25, 0.3)]
    means = pgov.trainer.epoch_means(log)
    assert [(row.epoch, row.step) for row in means] == [(0, 2), (1, 1)]
    assert means[0].alignment == 0.75
    assert means[0].consistency == 0.25
    assert means[0].total == pytest.approx(0.8)
    assert pgov.trainer.epoch_means([]) == []


def test_matched_pair_cosine(cloud_factory, small_params):
    cloud = cloud_factory([[0.5, 0.5, 0.5], [1.0, 1.0, 1.0]],
                          source_ids=[0, 1])
    cosine = pgov.trainer.matched_pair_cosine(
        small_params, [[cloud, cloud]], room_extent=_EXTENT,
        match_radius=0.05)
    assert cosine == pytest.approx(1.0)
    lonely = cloud_factory([[3.0, 3.0, 1.0]], source_ids=[5])
    assert math.isnan(pgov.trainer.matched_pair_cosine(
        small_params, [[cloud, lonely]], room_extent=_EXTENT,
        match_radius=0.05))
