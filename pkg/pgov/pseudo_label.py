#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""Stage-2 supervision by repeated grid sampling.

The frame vocabularies of a scene are merged into one scene vocabulary.
Each repetition keeps one random point per occupied voxel and predicts
a category distribution (softmax of cosine / temperature) for the kept
points; per point the predictions of all repetitions that kept it are
averaged. Points never kept fall back to one full-cloud prediction.

Usage:
    vocabulary = aggregate_vocabulary([map.vocabulary for map in maps])
    labels = generate_pseudo_labels(scene, params, vocabulary, embeddings,
                                    config.pseudo,
                                    room_extent=config.scene.room_extent)

"""
import dataclasses
import logging
import typing
import numpy as np
import pgov.embedding
import pgov.errors
import pgov.geometry
import pgov.helper
import pgov.scene_synth


@dataclasses.dataclass(frozen=True)
class SceneVocabulary:
    """Union of frame vocabularies in first-appearance order.

    provenance maps an entity to the frames that named it.

    """
    entities: typing.Tuple[str, ...]
    provenance: typing.Dict[str, typing.Tuple[int, ...]]

    def __len__(self) -> int:
        return len(self.entities)


@dataclasses.dataclass(frozen=True, eq=False)
class PseudoLabelSet:
    """Per-point pseudo labels of one scene.

    Instance attributes:
        probabilities: N x |C| averaged distributions; None when read
            from a pseudo-label file
        entity_ids: N argmax indices into `vocabulary`
        confidence: N max averaged probabilities
        accepted: N flags, confidence >= confidence_threshold
        vocabulary: scene vocabulary entities
        voxel_size, repetitions, temperature, confidence_threshold,
        context_radius, seed: settings that produced the set

    """
    # pylint: disable=too-many-instance-attributes
    probabilities: typing.Optional[np.ndarray]
    entity_ids: np.ndarray
    confidence: np.ndarray
    accepted: np.ndarray
    vocabulary: typing.Tuple[str, ...]
    voxel_size: float
    repetitions: int
    temperature: float
    confidence_threshold: float
    context_radius: float
    seed: int

    def __len__(self) -> int:
        return len(self.entity_ids)


def aggregate_vocabulary(frame_vocabs: typing.Sequence[typing.Sequence[str]],
                         frame_indices: typing.Optional[
                             typing.Sequence[int]] = None
                         ) -> SceneVocabulary:
    """Merge frame vocabularies.

    Args:
        frame_vocabs: vocabularies in ascending frame order
        frame_indices = None: frame index of every vocabulary (default:
            position in `frame_vocabs`)

    Returns:
        Scene vocabulary

    """
    if frame_indices is None:
        frame_indices = range(len(frame_vocabs))
    provenance: typing.Dict[str, typing.List[int]] = {}
    for frame, vocabulary in zip(frame_indices, frame_vocabs):
        for entity in vocabulary:
            frames = provenance.setdefault(entity, [])
            if not frames or frames[-1] != frame:
                frames.append(int(frame))
    return SceneVocabulary(tuple(provenance),
                           {entity: tuple(frames)
                            for entity, frames in provenance.items()})


def voxel_subsample(positions: np.ndarray, voxel_size_m: float,
                    seed: int) -> np.ndarray:
    """One uniformly chosen point per occupied voxel.

    Voxel key = floor(position / voxel_size) per axis. Every point draws
    a random priority; the highest priority of a voxel is kept.

    Returns:
        Sorted point indices

    """
    if not voxel_size_m > 0:
        raise ValueError('voxel size must be positive')
    if len(positions) == 0:
        return np.zeros(0, dtype=np.int64)
    keys = np.floor(np.asarray(positions) / voxel_size_m).astype(np.int64)
    priority = np.random.default_rng(seed).random(len(positions))
    order = np.lexsort((priority, keys[:, 2], keys[:, 1], keys[:, 0]))
    sorted_keys = keys[order]
    last = np.ones(len(order), dtype=bool)
    last[:-1] = np.any(sorted_keys[1:] != sorted_keys[:-1], axis=1)
    return np.sort(order[last])


def pool_features(features: np.ndarray, positions: np.ndarray,
                  radius: float) -> np.ndarray:
    """Normalized mean of the features within `radius` of each point."""
    grid = pgov.geometry.VoxelHash(positions, radius)
    queries, neighbours, _ = grid.pairs_within(positions, radius)
    order = np.lexsort((neighbours, queries))
    pooled = np.zeros_like(features)
    np.add.at(pooled, queries[order], features[neighbours[order]])
    return pgov.embedding.normalize_rows(pooled)


def distribution_from_features(features: np.ndarray,
                               text_matrix: np.ndarray,
                               temperature: float) -> np.ndarray:
    """Softmax over entities of cos(feature, text) / temperature."""
    logits = pgov.embedding.normalize_rows(features) \
        @ pgov.embedding.normalize_rows(text_matrix).T / temperature
    logits -= logits.max(axis=1, keepdims=True)
    weights = np.exp(logits)
    return weights / weights.sum(axis=1, keepdims=True)


def predict_distribution(params: pgov.embedding.EncoderParams,
                         inputs: np.ndarray,
                         vocabulary: typing.Sequence[str],
                         embeddings: pgov.embedding.TextEmbeddingTable,
                         temperature: float, *,
                         positions: typing.Optional[np.ndarray] = None,
                         context_radius: float = 0.0,
                         encoder: pgov.embedding.PointEncoder =
                         pgov.embedding.MLP_ENCODER) -> np.ndarray:
    """Per-point category distribution.

    Args:
        params: encoder parameters
        inputs: N x 6 encoder inputs
        vocabulary: entities (columns of the result)
        embeddings: text embeddings
        temperature: softmax temperature, positive
        positions = None: N x 3, needed for context pooling
        context_radius = 0.0: pool features within this radius
        encoder: point encoder

    Returns:
        N x len(vocabulary) probabilities

    Raises:
        EmptyVocabularyError: If the vocabulary is empty.

    """
    if len(vocabulary) == 0:
        raise pgov.errors.EmptyVocabularyError('prediction needs at least '
                                               'one entity')
    if not temperature > 0:
        raise ValueError('temperature must be positive')
    features, _ = encoder.encode(params, inputs)
    if context_radius > 0 and len(features):
        features = pool_features(features, positions, context_radius)
    return distribution_from_features(features,
                                      embeddings.matrix(vocabulary),
                                      temperature)


def generate_pseudo_labels(scene: pgov.scene_synth.GlobalScene,
                           params: pgov.embedding.EncoderParams,
                           scene_vocab: SceneVocabulary,
                           embeddings: pgov.embedding.TextEmbeddingTable,
                           settings: 'pgov.settings.PseudoSettings', *,
                           room_extent: typing.Sequence[float],
                           encoder: pgov.embedding.PointEncoder =
                           pgov.embedding.MLP_ENCODER) -> PseudoLabelSet:
    """Repeated grid sampling, averaging and confidence filtering.

    Repetition r samples with seed derive_seed(settings.seed, r);
    accumulation runs in ascending repetition order.

    Args:
        scene: global scene
        params: stage-1 encoder parameters
        scene_vocab: aggregated scene vocabulary
        embeddings: text embeddings
        settings: voxel_size, repetitions, temperature,
            confidence_threshold, context_radius, seed
        room_extent: normalizes xyz encoder inputs
        encoder: point encoder

    Returns:
        Pseudo-label set covering every point

    Raises:
        EmptyVocabularyError: If the scene vocabulary is empty.

    """
    if len(scene_vocab) == 0:
        raise pgov.errors.EmptyVocabularyError(
            'scene vocabulary is empty; every frame lost its entities')
    if settings.repetitions < 1:
        raise ValueError('repetitions must be at least 1')
    inputs = pgov.scene_synth.scene_inputs(scene.positions, scene.colors,
                                           room_extent)
    vocabulary = scene_vocab.entities

    def predict(index: np.ndarray) -> np.ndarray:
        return predict_distribution(
            params, inputs[index], vocabulary, embeddings,
            settings.temperature, positions=scene.positions[index],
            context_radius=settings.context_radius, encoder=encoder)

    summed = np.zeros((len(scene), len(vocabulary)))
    counts = np.zeros(len(scene), dtype=np.int64)
    for repetition in range(settings.repetitions):
        subset = voxel_subsample(scene.positions, settings.voxel_size,
                                 pgov.helper.derive_seed(settings.seed,
                                                         repetition))
        summed[subset] += predict(subset)
        counts[subset] += 1
    missing = np.nonzero(counts == 0)[0]
    if len(missing):
        logging.debug('%s of %s points never sampled; full-cloud fallback',
                      len(missing), len(scene))
        summed[missing] = predict(np.arange(len(scene)))[missing]
        counts[missing] = 1
    probabilities = summed / counts[:, None]
    entity_ids = np.argmax(probabilities, axis=1).astype(np.int64)
    confidence = probabilities[np.arange(len(scene)), entity_ids]
    accepted = confidence >= settings.confidence_threshold
    logging.info('Pseudo labels: %s of %s points accepted (c=%s)',
                 int(accepted.sum()), len(scene),
                 settings.confidence_threshold)
    return PseudoLabelSet(probabilities=probabilities, entity_ids=entity_ids,
                          confidence=confidence, accepted=accepted,
                          vocabulary=tuple(vocabulary),
                          voxel_size=settings.voxel_size,
                          repetitions=settings.repetitions,
                          temperature=settings.temperature,
                          confidence_threshold=settings.confidence_threshold,
                          context_radius=settings.context_radius,
                          seed=settings.seed)
