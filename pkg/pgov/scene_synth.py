#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""Procedural indoor scenes with known ground truth and camera
trajectories through them.

Primitives are axis-aligned boxes (six faces) and planes (one face; the
normal is the axis of the smallest half-extent). Surfaces are sampled
uniformly, so a primitive holds about area x surface_density points.

Usage:
    spec = random_scene_spec(config.scene, seed)
    scene = generate_scene(spec)
    trajectory = generate_trajectory(scene, n_frames=30, seed=seed)
    base, novel = split_base_novel(categories, 'B15/N4')

"""
import dataclasses
import logging
import math
import typing
import numpy as np
import pgov.errors
import pgov.geometry

PRIMITIVE_KINDS = ('box', 'plane')

# named base/novel splits: (base size, novel size)
NAMED_SPLITS = {'B15/N4': (15, 4), 'B12/N7': (12, 7), 'B10/N9': (10, 9)}

# half thickness of wall-like planes (meters)
_PLANE_HALF_THICKNESS = 0.001


@dataclasses.dataclass(frozen=True)
class CatalogEntry:
    """How a category is drawn by random_scene_spec.

    Instance attributes:
        kind: 'box' or 'plane'
        color: base rgb
        half_extent_range: per axis (low, high) for boxes; unused for
        planes, which are placed by role (floor, wall, on-wall)

    """
    kind: str
    color: typing.Tuple[float, float, float]
    half_extent_range: typing.Optional[
        typing.Tuple[typing.Tuple[float, float], ...]] = None


CATEGORY_CATALOG = {
    'floor': CatalogEntry('plane', (0.45, 0.40, 0.35)),
    'wall': CatalogEntry('plane', (0.90, 0.90, 0.85)),
    'chair': CatalogEntry('box', (0.85, 0.15, 0.15),
                          ((0.20, 0.30), (0.20, 0.30), (0.40, 0.50))),
    'table': CatalogEntry('box', (0.55, 0.30, 0.05),
                          ((0.40, 0.70), (0.30, 0.50), (0.35, 0.40))),
    'sofa': CatalogEntry('box', (0.20, 0.35, 0.80),
                         ((0.80, 1.00), (0.40, 0.50), (0.35, 0.45))),
    'bed': CatalogEntry('box', (0.95, 0.75, 0.80),
                        ((0.90, 1.00), (0.70, 0.90), (0.25, 0.30))),
    'cabinet': CatalogEntry('box', (0.25, 0.65, 0.30),
                            ((0.30, 0.50), (0.20, 0.30), (0.40, 0.70))),
    'bookshelf': CatalogEntry('box', (0.40, 0.15, 0.45),
                              ((0.40, 0.60), (0.15, 0.20), (0.80, 1.00))),
    'door': CatalogEntry('plane', (0.95, 0.60, 0.10)),
    'window': CatalogEntry('plane', (0.50, 0.85, 0.95)),
}

# (half width along the wall, half height, center height) of on-wall planes
_ON_WALL = {'door': (0.45, 1.0, 1.0), 'window': (0.6, 0.5, 1.5)}


@dataclasses.dataclass(frozen=True)
class SceneObject:
    """One primitive of a scene spec."""
    kind: str
    center: typing.Tuple[float, float, float]
    half_extents: typing.Tuple[float, float, float]
    category: str
    color: typing.Tuple[float, float, float]

    def __post_init__(self):
        if self.kind not in PRIMITIVE_KINDS:
            raise ValueError(f'unknown primitive kind: {self.kind}')
        if min(self.half_extents) <= 0:
            raise ValueError(f'half-extents must be positive: {self}')
        if not self.category:
            raise ValueError('category must be a non-empty string')
        if not all(0.0 <= c <= 1.0 for c in self.color):
            raise ValueError(f'color outside [0, 1]: {self.color}')


@dataclasses.dataclass(frozen=True)
class SceneSpec:
    """Input of generate_scene.

    Instance attributes:
        room_extent: meters; the room spans [0, extent] per axis, z up
        objects: primitives
        surface_density: points per square meter
        seed: unsigned 64-bit
        color_jitter: std of per-point color noise (0 = constant colors)

    """
    room_extent: typing.Tuple[float, float, float]
    objects: typing.Tuple[SceneObject, ...]
    surface_density: float
    seed: int
    color_jitter: float = 0.0

    def __post_init__(self):
        if len(self.room_extent) != 3 or min(self.room_extent) <= 0:
            raise ValueError(f'room extent must be positive: '
                             f'{self.room_extent}')
        if not self.surface_density > 0:
            raise ValueError('surface density must be positive')
        if self.color_jitter < 0:
            raise ValueError('color jitter must not be negative')


@dataclasses.dataclass(frozen=True, eq=False)
class GlobalScene:
    """Complete labeled point cloud.

    Instance attributes:
        point_ids: N unique ids
        positions: Nx3 meters
        colors: Nx3 rgb in [0, 1]
        gt_labels: N indices into `categories` (-1 = unlabeled, only for
        ingested clouds)
        categories: ordered category names

    """
    point_ids: np.ndarray
    positions: np.ndarray
    colors: np.ndarray
    gt_labels: np.ndarray
    categories: typing.Tuple[str, ...]

    def __len__(self) -> int:
        return len(self.point_ids)

    def index_of(self, point_ids: np.ndarray) -> np.ndarray:
        """Row index of every id in `point_ids`.

        Raises:
            KeyError: If an id is not part of the scene.

        """
        point_ids = np.asarray(point_ids, dtype=np.int64)
        sorter = np.argsort(self.point_ids, kind='stable')
        slot = np.searchsorted(self.point_ids, point_ids, sorter=sorter)
        slot = np.minimum(slot, len(sorter) - 1)
        rows = sorter[slot]
        missing = self.point_ids[rows] != point_ids
        if np.any(missing):
            raise KeyError(f'unknown point ids: {point_ids[missing][:5]}')
        return rows


@dataclasses.dataclass(frozen=True)
class CameraTrajectory:
    """Ordered camera poses; consecutive poses are adjacent frames."""
    poses: typing.Tuple[pgov.geometry.CameraPose, ...]
    frame_stride: int

    def __post_init__(self):
        if len(self.poses) < 1:
            raise ValueError('a trajectory needs at least one pose')
        if self.frame_stride < 1:
            raise ValueError('frame stride must be at least 1')

    def __len__(self) -> int:
        return len(self.poses)


def _faces(item: SceneObject) -> typing.List[tuple]:
    """Rectangular faces of a primitive as (origin, span_u, span_v)."""
    center = np.asarray(item.center, dtype=np.float64)
    half = np.asarray(item.half_extents, dtype=np.float64)
    if item.kind == 'plane':
        normals = [int(np.argmin(half))]
        sides = {normals[0]: (0.0,)}
    else:
        normals = [0, 1, 2]
        sides = {axis: (-1.0, 1.0) for axis in normals}
    faces = []
    for axis in normals:
        first, second = [a for a in range(3) if a != axis]
        for side in sides[axis]:
            origin = center.copy()
            origin[axis] += side * half[axis]
            origin[first] -= half[first]
            origin[second] -= half[second]
            span_u = np.zeros(3)
            span_u[first] = 2 * half[first]
            span_v = np.zeros(3)
            span_v[second] = 2 * half[second]
            faces.append((origin, span_u, span_v))
    return faces


def generate_scene(spec: SceneSpec) -> GlobalScene:
    """Sample a labeled point cloud from a scene spec.

    Deterministic for a fixed spec. Every primitive contributes
    max(1, round(area x density)) points.

    Args:
        spec: scene spec

    Returns:
        Global scene with consecutive point ids starting at 0

    Raises:
        EmptySpecError: If the spec has no objects.

    """
    if len(spec.objects) == 0:
        raise pgov.errors.EmptySpecError('scene spec has no objects')
    rng = np.random.default_rng(spec.seed)
    categories = list(dict.fromkeys(item.category for item in spec.objects))
    positions, colors, labels = [], [], []
    for item in spec.objects:
        faces = _faces(item)
        areas = np.array([np.linalg.norm(u) * np.linalg.norm(v)
                          for _, u, v in faces])
        count = max(1, int(round(areas.sum() * spec.surface_density)))
        face = rng.choice(len(faces), size=count, p=areas / areas.sum())
        s, t = rng.random((2, count))
        origin = np.stack([f[0] for f in faces])[face]
        span_u = np.stack([f[1] for f in faces])[face]
        span_v = np.stack([f[2] for f in faces])[face]
        positions.append(origin + s[:, None] * span_u + t[:, None] * span_v)
        color = np.tile(np.asarray(item.color, dtype=np.float64), (count, 1))
        if spec.color_jitter > 0:
            color = np.clip(color + spec.color_jitter
                            * rng.standard_normal((count, 3)), 0.0, 1.0)
        colors.append(color)
        labels.append(np.full(count, categories.index(item.category),
                              dtype=np.int64))
    positions = np.concatenate(positions)
    logging.debug('Generated scene (seed %s): %s points, %s categories',
                  spec.seed, len(positions), len(categories))
    return GlobalScene(point_ids=np.arange(len(positions), dtype=np.int64),
                       positions=positions,
                       colors=np.concatenate(colors),
                       gt_labels=np.concatenate(labels),
                       categories=tuple(categories))


def random_scene_spec(settings: 'pgov.settings.SceneSettings',
                      seed: int) -> SceneSpec:
    """Draw a desk-scale room layout.

    Floor and walls span the room; a door and a window sit 1 cm in
    front of two different walls; `objects_per_scene` furniture boxes
    rest on the floor. Only categories listed in settings.categories
    are used.

    Args:
        settings: scene settings
        seed: layout and sampling seed

    Returns:
        Scene spec

    """
    rng = np.random.default_rng(seed)
    length, width, height = settings.room_extent
    wanted = [name for name in settings.categories
              if name in CATEGORY_CATALOG]
    thin = _PLANE_HALF_THICKNESS

    def plane(name, center, half):
        return SceneObject('plane', tuple(center), tuple(half), name,
                           CATEGORY_CATALOG[name].color)

    objects = []
    if 'floor' in wanted:
        objects.append(plane('floor', (length / 2, width / 2, 0.0),
                             (length / 2, width / 2, thin)))
    # walls as (fixed axis, position, inward direction)
    walls = [(1, 0.0, 1.0), (1, width, -1.0), (0, 0.0, 1.0),
             (0, length, -1.0)]
    if 'wall' in wanted:
        for axis, position, _ in walls:
            center = [length / 2, width / 2, height / 2]
            half = [length / 2, width / 2, height / 2]
            center[axis] = position
            half[axis] = thin
            objects.append(plane('wall', center, half))
    on_wall = [name for name in ('door', 'window') if name in wanted]
    chosen_walls = rng.permutation(len(walls))[:len(on_wall)]
    for name, wall in zip(on_wall, chosen_walls.tolist()):
        axis, position, inward = walls[wall]
        along = 1 - axis
        half_along, half_up, center_up = _ON_WALL[name]
        room_along = (length, width)[along]
        center = [0.0, 0.0, center_up]
        center[axis] = position + 0.01 * inward
        center[along] = rng.uniform(half_along + 0.1,
                                    room_along - half_along - 0.1)
        half = [0.0, 0.0, half_up]
        half[axis] = thin
        half[along] = half_along
        objects.append(plane(name, center, half))

    boxes = [name for name in wanted if CATEGORY_CATALOG[name].kind == 'box']
    if boxes:
        for name in rng.choice(boxes, size=settings.objects_per_scene):
            entry = CATEGORY_CATALOG[str(name)]
            half = [rng.uniform(low, high)
                    for low, high in entry.half_extent_range]
            if rng.random() < 0.5:
                half[0], half[1] = half[1], half[0]
            center = (rng.uniform(half[0] + 0.1, length - half[0] - 0.1),
                      rng.uniform(half[1] + 0.1, width - half[1] - 0.1),
                      half[2])
            objects.append(SceneObject('box', center, tuple(half),
                                       str(name), entry.color))
    return SceneSpec(room_extent=tuple(settings.room_extent),
                     objects=tuple(objects),
                     surface_density=settings.surface_density,
                     seed=seed, color_jitter=settings.color_jitter)


def generate_trajectory(scene: GlobalScene, n_frames: int, seed: int, *,
                        frame_stride: int = 1, step_degrees: float = 4.0,
                        radius_fraction: float = 0.3,
                        eye_height_fraction: float = 0.55,
                        target_height_fraction: float = 0.3,
                        jitter: float = 0.05) -> CameraTrajectory:
    """Camera orbit around the centroid of the scene's bounding box.

    Raw poses advance `step_degrees` along a jittered circle and look at
    a point below the centroid; every `frame_stride`-th raw pose is kept.

    Args:
        scene: scene whose bounding box is the room volume
        n_frames: kept poses, at least 1
        seed: start angle and jitter seed

    Returns:
        Trajectory with n_frames poses

    Raises:
        ValueError: If n_frames or frame_stride is smaller than 1.

    """
    if n_frames < 1:
        raise ValueError('n_frames must be at least 1')
    if frame_stride < 1:
        raise ValueError('frame_stride must be at least 1')
    low = scene.positions.min(axis=0)
    high = scene.positions.max(axis=0)
    center = (low + high) / 2
    extent = high - low
    radius = radius_fraction * min(extent[0], extent[1])
    rng = np.random.default_rng(seed)
    start = rng.uniform(0.0, 2 * math.pi)
    raw_count = n_frames * frame_stride
    shake = jitter * rng.standard_normal((raw_count, 3))
    target = np.array([center[0], center[1],
                       low[2] + target_height_fraction * extent[2]])
    poses = []
    for raw in range(0, raw_count, frame_stride):
        angle = start + math.radians(step_degrees) * raw
        eye = np.array([center[0] + radius * math.cos(angle),
                        center[1] + radius * math.sin(angle),
                        low[2] + eye_height_fraction * extent[2]])
        poses.append(pgov.geometry.CameraPose.look_at(eye + shake[raw],
                                                      target))
    return CameraTrajectory(tuple(poses), frame_stride)


def split_base_novel(categories: typing.Sequence[str],
                     split: typing.Union[str, typing.Tuple[
                         typing.Sequence[int], typing.Sequence[int]]]
                     ) -> typing.Tuple[typing.List[int], typing.List[int]]:
    """Partition category indices into base and novel sets.

    A named split "B<b>/N<n>" takes the first b categories as base and
    the next n as novel. Explicit (base, novel) index lists are checked
    and returned unchanged.

    Args:
        categories: ordered category names
        split: split name or (base indices, novel indices)

    Returns:
        base indices, novel indices

    Raises:
        BadSplitError: If the split needs more categories than given,
        names an unknown split, or the explicit lists overlap or
        point outside the categories.

    """
    if isinstance(split, str):
        if split not in NAMED_SPLITS:
            raise pgov.errors.BadSplitError(f'unknown split: {split}',
                                            key='eval.split')
        n_base, n_novel = NAMED_SPLITS[split]
        if n_base + n_novel > len(categories):
            raise pgov.errors.BadSplitError(
                f'split {split} needs {n_base + n_novel} categories, '
                f'got {len(categories)}', key='eval.split')
        return (list(range(n_base)),
                list(range(n_base, n_base + n_novel)))
    base, novel = (list(int(i) for i in part) for part in split)
    if set(base) & set(novel):
        raise pgov.errors.BadSplitError(
            f'base and novel overlap: {sorted(set(base) & set(novel))}',
            key='eval.base_ids')
    if any(not 0 <= i < len(categories) for i in base + novel):
        raise pgov.errors.BadSplitError(
            'split index outside the categories', key='eval.base_ids')
    return base, novel


def scene_inputs(positions: np.ndarray, colors: np.ndarray,
                 room_extent: typing.Sequence[float]) -> np.ndarray:
    """Encoder inputs: xyz mapped to [-1, 1] by the room extent, rgb."""
    extent = np.asarray(room_extent, dtype=np.float64)
    return np.concatenate([2.0 * positions / extent - 1.0, colors], axis=1)
