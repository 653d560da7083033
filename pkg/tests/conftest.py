#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""Shared fixtures: tiny pipeline configs, stub encoders, toy scenes."""
import json
import numpy as np
import pytest
import pgov.configuration
import pgov.embedding
import pgov.geometry
import pgov.scene_synth

# small enough for an end-to-end run in a few seconds
TINY_SETTINGS = dict(
    scene=dict(n_train_scenes=2, n_heldout_scenes=1, objects_per_scene=3,
               surface_density=60.0),
    camera=dict(width=24, height=18, fx=18.0, fy=18.0, cx=12.0, cy=9.0,
                n_frames=6, frame_stride=1, step_degrees=10.0),
    encoder=dict(hidden_sizes=[8], embedding_dim=8),
    train=dict(epochs_stage1=1, epochs_stage2=1, batch_size_stage1=3,
               stage2_points_per_scene=512),
    pseudo=dict(repetitions=2, confidence_threshold=0.0),
    ablation=dict(seeds=[0])
)


def _merge(tree, overrides):
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(tree.get(key), dict) \
                and key != 'synonyms':
            _merge(tree[key], value)
        else:
            tree[key] = value
    return tree


@pytest.fixture
def write_config(tmp_path):
    """Write a tiny JSON config (plus overrides) and return its path."""
    def factory(overrides=None, name='config.json'):
        tree = _merge(json.loads(json.dumps(TINY_SETTINGS)),
                      overrides or {})
        path = tmp_path / name
        path.write_text(json.dumps(tree), encoding='utf-8')
        return str(path)
    return factory


@pytest.fixture
def tiny_config(tmp_path, write_config):
    """Resolved tiny PipelineConfig writing to tmp_path/run."""
    def factory(overrides=None, out='run'):
        path = write_config(overrides)
        config = pgov.configuration.get_configuration(
            dict(config=path, out=str(tmp_path / out)),
            validate_settings=True)
        return pgov.configuration.resolve(config)
    return factory


class LookupEncoder:
    """Perfect test encoder: maps a catalog color to the embedding of its
    category; parameters are ignored and gradients are zero."""

    def __init__(self, embeddings):
        self.table = {}
        for name, entry in pgov.scene_synth.CATEGORY_CATALOG.items():
            key = tuple(round(c, 5) for c in entry.color)
            self.table[key] = embeddings.vector(name)
        self.fallback = np.zeros(embeddings.dim)
        self.fallback[0] = 1.0

    def encode(self, params, inputs):
        del params
        features = np.array([
            self.table.get(tuple(round(float(c), 5) for c in row[3:6]),
                           self.fallback) for row in inputs])
        return features.reshape(len(inputs), len(self.fallback)), None

    def backward(self, params, cache, d_features):
        del cache, d_features
        return [np.zeros_like(array) for array in params.arrays()]


@pytest.fixture
def lookup_encoder():
    return LookupEncoder


def make_scene(positions, labels, categories=('chair', 'table'),
               colors=None):
    positions = np.asarray(positions, dtype=np.float64)
    if colors is None:
        colors = np.full((len(positions), 3), 0.5)
    return pgov.scene_synth.GlobalScene(
        point_ids=np.arange(len(positions), dtype=np.int64),
        positions=positions, colors=np.asarray(colors, dtype=np.float64),
        gt_labels=np.asarray(labels, dtype=np.int64),
        categories=tuple(categories))


def make_cloud(positions, source_ids=None, entity_ids=None,
               vocabulary=(), colors=None, frame_index=0):
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    count = len(positions)
    if source_ids is None:
        source_ids = np.full(count, pgov.geometry.SENTINEL_NONE)
    if entity_ids is None:
        entity_ids = np.full(count, pgov.geometry.UNLABELED)
    if colors is None:
        colors = np.full((count, 3), 0.5)
    return pgov.geometry.PartialCloud(
        positions=positions, colors=np.asarray(colors, dtype=np.float64),
        entity_ids=np.asarray(entity_ids, dtype=np.int64),
        source_point_ids=np.asarray(source_ids, dtype=np.int64),
        source_pixels=np.zeros((count, 2), dtype=np.int64),
        frame_index=frame_index, vocabulary=tuple(vocabulary))


@pytest.fixture
def toy_camera():
    """10 x 8 camera at the origin looking along +z."""
    intrinsics = pgov.geometry.CameraIntrinsics(fx=10.0, fy=10.0, cx=5.0,
                                                cy=4.0, width=10, height=8)
    pose = pgov.geometry.CameraPose(np.eye(3), np.zeros(3))
    return intrinsics, pose


@pytest.fixture
def small_params():
    return pgov.embedding.init_encoder((6, 5, 4), seed=3)


@pytest.fixture
def scene_factory():
    return make_scene


@pytest.fixture
def cloud_factory():
    return make_cloud
