#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""Per-frame vocabularies and pixel-wise entity masks.

The oracle reads the ground truth of the points a frame shows and
degrades it in a fixed order: category dropout (a visible category is
not grounded), pixel mislabeling, boundary erosion. Masks produced by an
external 2D pipeline can be ingested instead.

Usage:
    noise = NoiseConfig.from_settings(config.oracle, seed)
    pixel_map = oracle_pixel_entities(frame, scene, noise)
    write_pixel_entities(pixel_map, frames_dir, frame.frame_index)
    pixel_map = ingest_external_masks(mask_path, vocab_path, shape)

"""
import dataclasses
import logging
import typing
import numpy as np
import scipy.ndimage
import pgov.errors
import pgov.formats
import pgov.geometry
import pgov.scene_synth

UNLABELED = pgov.geometry.UNLABELED
MASK_SUFFIX = '.entmask'
VOCAB_SUFFIX = '.vocab.json'


@dataclasses.dataclass(frozen=True)
class NoiseConfig:
    """Oracle noise; all zero reproduces the ground truth."""
    category_dropout_prob: float = 0.0
    pixel_mislabel_prob: float = 0.0
    boundary_erosion_px: int = 0
    seed: int = 0

    def __post_init__(self):
        for name in ('category_dropout_prob', 'pixel_mislabel_prob'):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f'{name} must be in [0, 1]')
        if self.boundary_erosion_px < 0:
            raise ValueError('boundary_erosion_px must not be negative')

    @classmethod
    def from_settings(cls, settings: 'pgov.settings.OracleSettings',
                      seed: int) -> 'NoiseConfig':
        return cls(settings.category_dropout_prob,
                   settings.pixel_mislabel_prob,
                   settings.boundary_erosion_px, seed)


@dataclasses.dataclass(frozen=True, eq=False)
class PixelEntityMap:
    """HxW raster of indices into `vocabulary` (UNLABELED = -1)."""
    raster: np.ndarray
    vocabulary: typing.Tuple[str, ...]

    def __post_init__(self):
        if len(set(self.vocabulary)) != len(self.vocabulary):
            raise ValueError(f'duplicate entities in {self.vocabulary}')
        labeled = self.raster[self.raster != UNLABELED]
        if labeled.size and (labeled.min() < 0
                             or labeled.max() >= len(self.vocabulary)):
            raise ValueError('entity id outside the vocabulary')

    @property
    def labeled_count(self) -> int:
        return int(np.count_nonzero(self.raster != UNLABELED))


def _gt_names(frame: pgov.geometry.Frame,
              scene: pgov.scene_synth.GlobalScene) -> np.ndarray:
    """HxW ground-truth category index into scene.categories (-1 if
    none)."""
    gt = np.full(frame.depth.shape, -1, dtype=np.int64)
    covered = frame.valid & (frame.source_id != pgov.geometry.SENTINEL_NONE)
    if np.any(covered):
        rows = scene.index_of(frame.source_id[covered])
        gt[covered] = scene.gt_labels[rows]
    return gt


def erode_boundaries(raster: np.ndarray, radius_px: int) -> np.ndarray:
    """Unlabel pixels within `radius_px` (Chebyshev) of another entity.

    UNLABELED neighbours never erode a pixel, so the labeled set shrinks
    monotonically with the radius.

    """
    if radius_px <= 0:
        return raster
    structure = np.ones((2 * radius_px + 1, 2 * radius_px + 1), dtype=bool)
    eroded = raster.copy()
    for entity in np.unique(raster[raster != UNLABELED]).tolist():
        region = raster == entity
        keep = scipy.ndimage.binary_erosion(
            region | (raster == UNLABELED), structure=structure,
            border_value=1)
        eroded[region & ~keep] = UNLABELED
    return eroded


def oracle_pixel_entities(frame: pgov.geometry.Frame,
                          scene: pgov.scene_synth.GlobalScene,
                          noise: NoiseConfig) -> PixelEntityMap:
    """Pixel entities of a rendered frame.

    Without noise the vocabulary is the visible ground-truth categories
    in row-major first-appearance order and every valid pixel carries
    its category. Randomness is drawn from (noise.seed, frame_index).

    Args:
        frame: frame rendered from `scene`
        scene: global scene with ground truth
        noise: noise settings

    Returns:
        Pixel entity map

    Raises:
        MissingProvenanceError: If the frame has no source-id raster.

    """
    if frame.source_id is None:
        raise pgov.errors.MissingProvenanceError(
            f'frame {frame.frame_index} has no source-id raster')
    gt = _gt_names(frame, scene)
    visible = gt[gt >= 0]
    order = np.unique(visible, return_index=True)
    categories = order[0][np.argsort(order[1])].tolist()
    rng = np.random.default_rng([noise.seed, frame.frame_index])

    dropped = rng.random(len(categories)) < noise.category_dropout_prob
    kept = [c for c, drop in zip(categories, dropped) if not drop]
    lookup = np.full(len(scene.categories) + 1, UNLABELED, dtype=np.int64)
    lookup[kept] = np.arange(len(kept))
    raster = lookup[gt]  # gt == -1 reads the trailing UNLABELED slot
    vocabulary = tuple(scene.categories[c] for c in kept)

    if noise.pixel_mislabel_prob > 0 and len(kept) > 1:
        flip = rng.random(raster.shape) < noise.pixel_mislabel_prob
        shift = rng.integers(1, len(kept), size=raster.shape)
        flip &= raster != UNLABELED
        raster[flip] = (raster[flip] + shift[flip]) % len(kept)

    raster = erode_boundaries(raster, noise.boundary_erosion_px)
    if dropped.any():
        logging.debug('Frame %s: dropped %s of %s categories',
                      frame.frame_index, int(dropped.sum()),
                      len(categories))
    return PixelEntityMap(raster, vocabulary)


def apply_base_supervision(pixel_map: PixelEntityMap,
                           frame: pgov.geometry.Frame,
                           scene: pgov.scene_synth.GlobalScene,
                           base_categories: typing.Collection[str]
                           ) -> PixelEntityMap:
    """Give pixels of base categories their ground-truth category.

    Entities new to the frame vocabulary are appended to it.

    """
    if frame.source_id is None:
        raise pgov.errors.MissingProvenanceError(
            f'frame {frame.frame_index} has no source-id raster')
    gt = _gt_names(frame, scene)
    vocabulary = list(pixel_map.vocabulary)
    raster = pixel_map.raster.copy()
    for name in base_categories:
        if name not in scene.categories:
            continue
        region = gt == scene.categories.index(name)
        if not np.any(region):
            continue
        if name not in vocabulary:
            vocabulary.append(name)
        raster[region] = vocabulary.index(name)
    return PixelEntityMap(raster, tuple(vocabulary))


def ingest_external_masks(mask_path: str, vocab_path: str,
                          shape: typing.Tuple[int, int]) -> PixelEntityMap:
    """Read an externally produced entity mask and its vocabulary.

    Args:
        mask_path: i16 LE raster, -1 = UNLABELED
        vocab_path: JSON string array
        shape: (height, width) of the frame

    Returns:
        Pixel entity map

    Raises:
        FormatError: If a file is truncated or malformed.
        VocabMismatchError: If an id is not below the vocabulary size.

    """
    vocabulary = pgov.formats.read_vocabulary(vocab_path)
    raster = pgov.formats.read_entity_mask(mask_path, shape)
    flat = raster.reshape(-1)
    bad = np.nonzero(flat >= len(vocabulary))[0]
    if len(bad):
        raise pgov.errors.VocabMismatchError(
            f'entity id {flat[bad[0]]} with {len(vocabulary)} entities',
            mask_path, int(bad[0]) * 2)
    return PixelEntityMap(raster, vocabulary)


def write_pixel_entities(pixel_map: PixelEntityMap, frames_dir: str,
                         frame_index: int) -> None:
    """Write frame_%06d.entmask and frame_%06d.vocab.json."""
    pgov.formats.write_entity_mask(
        pgov.formats.frame_path(frames_dir, frame_index, MASK_SUFFIX),
        pixel_map.raster)
    pgov.formats.write_vocabulary(
        pgov.formats.frame_path(frames_dir, frame_index, VOCAB_SUFFIX),
        pixel_map.vocabulary)


def read_pixel_entities(frames_dir: str, frame_index: int,
                        shape: typing.Tuple[int, int]) -> PixelEntityMap:
    return ingest_external_masks(
        pgov.formats.frame_path(frames_dir, frame_index, MASK_SUFFIX),
        pgov.formats.frame_path(frames_dir, frame_index, VOCAB_SUFFIX),
        shape)
