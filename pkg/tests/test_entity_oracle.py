#!/usr/bin/env python3
# -*- coding: utf-8 -*-
import numpy as np
import pytest
import pgov.entity_oracle
import pgov.errors
import pgov.formats
import pgov.geometry

UNLABELED = pgov.entity_oracle.UNLABELED


@pytest.fixture
def labeled_frame(scene_factory):
    """2 x 3 frame over a 4-point scene; pixel (1, 1) is empty."""
    scene = scene_factory(np.zeros((4, 3)), [0, 0, 1, 2],
                          categories=('chair', 'table', 'sofa'))
    intrinsics = pgov.geometry.CameraIntrinsics(1.0, 1.0, 1.0, 0.5, 3, 2)
    pose = pgov.geometry.CameraPose(np.eye(3), np.zeros(3))
    frame = pgov.geometry.Frame(
        frame_index=4, intrinsics=intrinsics, pose=pose,
        depth=np.array([[1.0, 1.0, 1.0], [1.0, 0.0, 1.0]]),
        color=np.zeros((2, 3, 3)),
        source_id=np.array([[2, 0, 1], [3, -1, 0]]))
    return frame, scene


def test_zero_noise_is_ground_truth(labeled_frame):
    frame, scene = labeled_frame
    pixel_map = pgov.entity_oracle.oracle_pixel_entities(
        frame, scene, pgov.entity_oracle.NoiseConfig())
    assert pixel_map.vocabulary == ('table', 'chair', 'sofa')
    assert pixel_map.raster.tolist() == [[0, 1, 1], [2, UNLABELED, 1]]
    assert pixel_map.labeled_count == 5


def test_missing_provenance(labeled_frame):
    frame, scene = labeled_frame
    frame = pgov.geometry.Frame(frame.frame_index, frame.intrinsics,
                                frame.pose, frame.depth, frame.color, None)
    with pytest.raises(pgov.errors.MissingProvenanceError):
        pgov.entity_oracle.oracle_pixel_entities(
            frame, scene, pgov.entity_oracle.NoiseConfig())


def test_full_dropout(labeled_frame):
    frame, scene = labeled_frame
    pixel_map = pgov.entity_oracle.oracle_pixel_entities(
        frame, scene, pgov.entity_oracle.NoiseConfig(
            category_dropout_prob=1.0))
    assert pixel_map.vocabulary == ()
    assert np.all(pixel_map.raster == UNLABELED)


def test_full_mislabel_changes_every_pixel(labeled_frame):
    frame, scene = labeled_frame
    clean = pgov.entity_oracle.oracle_pixel_entities(
        frame, scene, pgov.entity_oracle.NoiseConfig())
    noisy = pgov.entity_oracle.oracle_pixel_entities(
        frame, scene, pgov.entity_oracle.NoiseConfig(pixel_mislabel_prob=1.0,
                                                     seed=9))
    assert noisy.vocabulary == clean.vocabulary
    labeled = clean.raster != UNLABELED
    assert np.all(noisy.raster[labeled] != clean.raster[labeled])
    assert np.all(noisy.raster[~labeled] == UNLABELED)
    again = pgov.entity_oracle.oracle_pixel_entities(
        frame, scene, pgov.entity_oracle.NoiseConfig(pixel_mislabel_prob=1.0,
                                                     seed=9))
    np.testing.assert_array_equal(again.raster, noisy.raster)


def test_erosion_at_entity_boundaries():
    raster = np.array([[0, 0, 1, 1]])
    eroded = pgov.entity_oracle.erode_boundaries(raster, 1)
    assert eroded.tolist() == [[0, UNLABELED, UNLABELED, 1]]
    # unlabeled neighbours do not erode
    assert pgov.entity_oracle.erode_boundaries(eroded, 1).tolist() \
        == eroded.tolist()
    assert pgov.entity_oracle.erode_boundaries(raster, 0) is raster


def test_erosion_is_monotone():
    rng = np.random.default_rng(0)
    raster = rng.integers(-1, 3, (12, 12))
    labeled = [pgov.entity_oracle.erode_boundaries(raster, r) != UNLABELED
               for r in range(4)]
    for wider, narrower in zip(labeled[1:], labeled[:-1]):
        assert np.all(narrower | ~wider)


def test_base_supervision(labeled_frame):
    frame, scene = labeled_frame
    dropped = pgov.entity_oracle.oracle_pixel_entities(
        frame, scene, pgov.entity_oracle.NoiseConfig(
            category_dropout_prob=1.0))
    supervised = pgov.entity_oracle.apply_base_supervision(
        dropped, frame, scene, ['sofa', 'bed'])
    assert supervised.vocabulary == ('sofa',)
    expected = np.full((2, 3), UNLABELED)
    expected[1, 0] = 0
    np.testing.assert_array_equal(supervised.raster, expected)


def test_pixel_map_validation():
    with pytest.raises(ValueError):
        pgov.entity_oracle.PixelEntityMap(np.zeros((2, 2), dtype=int),
                                          ('a', 'a'))
    with pytest.raises(ValueError):
        pgov.entity_oracle.PixelEntityMap(np.full((2, 2), 2), ('a', 'b'))


def test_noise_validation():
    with pytest.raises(ValueError):
        pgov.entity_oracle.NoiseConfig(category_dropout_prob=1.5)
    with pytest.raises(ValueError):
        pgov.entity_oracle.NoiseConfig(boundary_erosion_px=-1)


def test_written_masks_can_be_ingested(tmp_path, labeled_frame):
    frame, scene = labeled_frame
    pixel_map = pgov.entity_oracle.oracle_pixel_entities(
        frame, scene, pgov.entity_oracle.NoiseConfig())
    pgov.entity_oracle.write_pixel_entities(pixel_map, str(tmp_path), 4)
    assert (tmp_path / 'frame_000004.entmask').stat().st_size == 12
    again = pgov.entity_oracle.read_pixel_entities(str(tmp_path), 4, (2, 3))
    assert again.vocabulary == pixel_map.vocabulary
    np.testing.assert_array_equal(again.raster, pixel_map.raster)


def test_ingest_vocab_mismatch(tmp_path):
    mask = str(tmp_path / 'm.entmask')
    vocab = str(tmp_path / 'm.vocab.json')
    pgov.formats.write_entity_mask(mask, np.array([[0, -1], [3, 1]]))
    pgov.formats.write_vocabulary(vocab, ['chair', 'couch'])
    with pytest.raises(pgov.errors.VocabMismatchError) as error:
        pgov.entity_oracle.ingest_external_masks(mask, vocab, (2, 2))
    assert error.value.offset == 4
    assert error.value.path == mask


def test_ingest_truncated_mask(tmp_path):
    mask = tmp_path / 'm.entmask'
    mask.write_bytes(b'\x00\x00\x01')
    vocab = str(tmp_path / 'm.vocab.json')
    pgov.formats.write_vocabulary(vocab, ['chair'])
    with pytest.raises(pgov.errors.FormatError) as error:
        pgov.entity_oracle.ingest_external_masks(str(mask), vocab, (1, 2))
    assert error.value.offset == 3
