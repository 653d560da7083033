#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""Pinhole camera model, z-buffer point splatting, depth backprojection,
frame to partial cloud conversion and cross-frame point matching.

Camera frame convention: x right, y down, z forward (optical axis).
Poses map camera to world coordinates. Pixel (u, v) is the column / row
of a raster; the ray of integer pixel (u, v) passes through (u, v)
itself, i.e. the backprojection is applied to raw pixel coordinates.

Usage:
    point = backproject_pixel(u, v, depth, intrinsics, pose)
    u, v, depth = project_point(point, intrinsics, pose)
    frame = render_frame(scene, intrinsics, pose, point_radius_px=1)
    cloud = frame_to_partial_cloud(frame, pixel_entities)
    matches = match_points(cloud_a, cloud_b, 'by_id')

"""
import dataclasses
import logging
import typing
import numpy as np
import pgov.errors

# marks raster pixels without a source point
SENTINEL_NONE = -1
# marks points / pixels without an entity
UNLABELED = -1

MATCH_MODES = ('by_id', 'by_radius')

# voxel keys are packed into one int64 with 21 bits per axis
_KEY_BITS = 21
_KEY_OFFSET = 1 << (_KEY_BITS - 1)


@dataclasses.dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics K plus raster size."""
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f'focal lengths must be positive: {self}')
        if self.width < 1 or self.height < 1:
            raise ValueError(f'raster size must be positive: {self}')
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError(f'principal point outside raster: {self}')

    @property
    def matrix(self) -> np.ndarray:
        """3x3 intrinsic matrix K."""
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])

    @property
    def shape(self) -> typing.Tuple[int, int]:
        """Raster shape (height, width)."""
        return self.height, self.width


@dataclasses.dataclass(frozen=True, eq=False)
class CameraPose:
    """Rigid camera-to-world transform.

    Instance attributes:
        rotation: 3x3 orthonormal, det +1
        translation: camera center in world coordinates (meters)

    """
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rotation = np.asarray(self.rotation, dtype=np.float64)
        translation = np.asarray(self.translation, dtype=np.float64)
        if rotation.shape != (3, 3) or translation.shape != (3,):
            raise ValueError('pose needs a 3x3 rotation and a 3-vector')
        if not np.allclose(rotation.T @ rotation, np.eye(3), rtol=0,
                           atol=1e-9):
            raise ValueError('rotation is not orthonormal')
        if abs(np.linalg.det(rotation) - 1.0) > 1e-9:
            raise ValueError('rotation is not proper (det != +1)')
        object.__setattr__(self, 'rotation', rotation)
        object.__setattr__(self, 'translation', translation)

    def as_matrix(self) -> np.ndarray:
        """4x4 homogeneous camera-to-world matrix."""
        matrix = np.eye(4)
        matrix[:3, :3] = self.rotation
        matrix[:3, 3] = self.translation
        return matrix

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> 'CameraPose':
        """Inverse of as_matrix; the last row must be (0, 0, 0, 1)."""
        matrix = np.asarray(matrix, dtype=np.float64).reshape(4, 4)
        if not np.array_equal(matrix[3], [0.0, 0.0, 0.0, 1.0]):
            raise ValueError('last row of a rigid transform must be 0 0 0 1')
        return cls(matrix[:3, :3].copy(), matrix[:3, 3].copy())

    @classmethod
    def look_at(cls, eye: np.ndarray, target: np.ndarray,
                up: typing.Sequence[float] = (0.0, 0.0, 1.0)
                ) -> 'CameraPose':
        """Pose at `eye` whose optical axis points at `target`.

        Raises:
            ValueError: If the viewing direction is parallel to `up`.

        """
        eye = np.asarray(eye, dtype=np.float64)
        forward = np.asarray(target, dtype=np.float64) - eye
        forward = forward / np.linalg.norm(forward)
        right = np.cross(forward, np.asarray(up, dtype=np.float64))
        norm = np.linalg.norm(right)
        if norm < 1e-9:
            raise ValueError('viewing direction parallel to up vector')
        right = right / norm
        down = np.cross(forward, right)
        rotation = np.stack([right, down, forward], axis=1)
        return cls(rotation, eye)


@dataclasses.dataclass(frozen=True, eq=False)
class Frame:
    """One RGB-D observation.

    Instance attributes:
        frame_index: position in the trajectory
        intrinsics: camera intrinsics
        pose: camera-to-world pose
        depth: HxW meters, 0.0 marks invalid pixels
        color: HxWx3 rgb in [0, 1]
        source_id: HxW point ids (SENTINEL_NONE if uncovered); None for
            frames without synthetic provenance
        subpixel: HxWx2 exact (u, v) projection of the point that owns
            each pixel (NaN if uncovered); None backprojects the integer
            pixel coordinates

    """
    frame_index: int
    intrinsics: CameraIntrinsics
    pose: CameraPose
    depth: np.ndarray
    color: np.ndarray
    source_id: typing.Optional[np.ndarray]
    subpixel: typing.Optional[np.ndarray] = None

    def __post_init__(self):
        shape = self.intrinsics.shape
        if self.depth.shape != shape or self.color.shape != shape + (3,):
            raise pgov.errors.DimMismatchError(
                f'frame {self.frame_index}: rasters do not match '
                f'intrinsics {shape}')
        if self.source_id is not None and self.source_id.shape != shape:
            raise pgov.errors.DimMismatchError(
                f'frame {self.frame_index}: source id raster shape '
                f'{self.source_id.shape} != {shape}')
        if self.subpixel is not None \
                and self.subpixel.shape != shape + (2,):
            raise pgov.errors.DimMismatchError(
                f'frame {self.frame_index}: subpixel raster shape '
                f'{self.subpixel.shape} != {shape + (2,)}')
        if not np.all(np.isfinite(self.depth)) or np.any(self.depth < 0):
            raise ValueError(f'frame {self.frame_index}: depth must be '
                             'finite and non-negative')

    @property
    def valid(self) -> np.ndarray:
        """HxW mask of pixels with valid depth."""
        return self.depth > 0


@dataclasses.dataclass(frozen=True, eq=False)
class PartialCloud:
    """Points backprojected from one frame.

    Instance attributes:
        positions: Nx3 world coordinates
        colors: Nx3 rgb
        entity_ids: N indices into `vocabulary` or UNLABELED
        source_point_ids: N scene point ids or SENTINEL_NONE
        source_pixels: Nx2 (u, v)
        frame_index: frame the points came from
        vocabulary: the frame vocabulary C_i

    """
    positions: np.ndarray
    colors: np.ndarray
    entity_ids: np.ndarray
    source_point_ids: np.ndarray
    source_pixels: np.ndarray
    frame_index: int
    vocabulary: typing.Tuple[str, ...]

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def labeled(self) -> np.ndarray:
        """Mask of points that carry an entity."""
        return self.entity_ids != UNLABELED

    def entity_names(self) -> typing.List[typing.Optional[str]]:
        """Entity string per point (None for unlabeled points)."""
        return [self.vocabulary[i] if i != UNLABELED else None
                for i in self.entity_ids.tolist()]


@dataclasses.dataclass(frozen=True, eq=False)
class MatchSet:
    """Pairs of indices (into cloud A, into cloud B) of the same physical
    point, sorted by the A index."""
    pairs: np.ndarray
    mode: str
    radius: typing.Optional[float] = None

    def __len__(self) -> int:
        return len(self.pairs)


def backproject_pixels(u: np.ndarray, v: np.ndarray, depth: np.ndarray,
                       intrinsics: CameraIntrinsics,
                       pose: CameraPose) -> np.ndarray:
    """Vectorized backprojection of pixels with known depth.

    Args:
        u, v: pixel coordinates (may be real-valued)
        depth: camera-frame z per pixel, all positive
        intrinsics: camera intrinsics
        pose: camera-to-world pose

    Returns:
        Nx3 world points

    """
    depth = np.asarray(depth, dtype=np.float64)
    camera = np.stack([(np.asarray(u, dtype=np.float64) - intrinsics.cx)
                       / intrinsics.fx * depth,
                       (np.asarray(v, dtype=np.float64) - intrinsics.cy)
                       / intrinsics.fy * depth,
                       depth], axis=-1)
    return camera @ pose.rotation.T + pose.translation


def backproject_pixel(u: float, v: float, depth_m: float,
                      intrinsics: CameraIntrinsics,
                      pose: CameraPose) -> np.ndarray:
    """Map pixel (u, v) with depth to a world point.

    Returns:
        pose applied to depth * K^-1 [u, v, 1]^T

    Raises:
        InvalidDepthError: If depth_m is not a positive finite number.

    """
    if not (np.isfinite(depth_m) and depth_m > 0):
        raise pgov.errors.InvalidDepthError(
            f'depth must be positive and finite, got {depth_m}')
    return backproject_pixels(np.array([u]), np.array([v]),
                              np.array([depth_m]), intrinsics, pose)[0]


def project_points(points: np.ndarray, intrinsics: CameraIntrinsics,
                   pose: CameraPose
                   ) -> typing.Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized projection of world points.

    Points behind the camera get a non-positive depth; their pixel
    coordinates are meaningless and must be masked by the caller.

    Returns:
        u, v, camera-frame depth (each of length N)

    """
    camera = (np.asarray(points, dtype=np.float64) - pose.translation) \
        @ pose.rotation
    depth = camera[:, 2]
    with np.errstate(divide='ignore', invalid='ignore'):
        u = intrinsics.fx * camera[:, 0] / depth + intrinsics.cx
        v = intrinsics.fy * camera[:, 1] / depth + intrinsics.cy
    return u, v, depth


def project_point(world_point: np.ndarray, intrinsics: CameraIntrinsics,
                  pose: CameraPose) -> typing.Tuple[float, float, float]:
    """Project one world point.

    Returns:
        (u, v, camera_depth)

    Raises:
        BehindCameraError: If the camera-frame depth is not positive.

    """
    u, v, depth = project_points(np.asarray(world_point).reshape(1, 3),
                                 intrinsics, pose)
    if not depth[0] > 0:
        raise pgov.errors.BehindCameraError(
            f'point {world_point} is behind the camera (z={depth[0]})')
    return float(u[0]), float(v[0]), float(depth[0])


def _splat_offsets(point_radius_px: int) -> np.ndarray:
    """Pixel offsets (du, dv) of a splat disc; radius 1 is one pixel."""
    reach = point_radius_px - 1
    steps = np.arange(-reach, reach + 1)
    du, dv = np.meshgrid(steps, steps, indexing='xy')
    inside = du ** 2 + dv ** 2 <= reach ** 2
    return np.stack([du[inside], dv[inside]], axis=1)


def render_frame(scene: 'pgov.scene_synth.GlobalScene',
                 intrinsics: CameraIntrinsics, pose: CameraPose,
                 point_radius_px: int = 1, frame_index: int = 0) -> Frame:
    """Render a scene by z-buffer point splatting.

    Every point in front of the camera covers the disc of pixels around
    its rounded projection; per pixel the smallest camera depth wins
    (lower point index on equal depth). Covered pixels record depth,
    color, point id and exact (u, v) projection of the winner, so that
    backprojecting a pixel returns the winning point itself; the rest
    keep depth 0, SENTINEL_NONE and NaN.

    Args:
        scene: global scene
        intrinsics: camera intrinsics
        pose: camera-to-world pose
        point_radius_px = 1: splat radius, 1 covers a single pixel
        frame_index = 0: stored in the frame

    Returns:
        Rendered frame

    """
    height, width = intrinsics.shape
    depth = np.zeros((height, width))
    color = np.zeros((height, width, 3))
    source_id = np.full((height, width), SENTINEL_NONE, dtype=np.int64)
    subpixel = np.full((height, width, 2), np.nan)

    u, v, z = project_points(scene.positions, intrinsics, pose)
    reach = point_radius_px
    front = np.nonzero((z > 0) & (u > -reach - 1) & (u < width + reach)
                       & (v > -reach - 1) & (v < height + reach))[0]
    if len(front) == 0:
        logging.debug('Frame %s: no point in front of the camera',
                      frame_index)
        return Frame(frame_index, intrinsics, pose, depth, color, source_id,
                     subpixel)
    u_px = np.rint(u[front]).astype(np.int64)
    v_px = np.rint(v[front]).astype(np.int64)

    pixels, owners = [], []
    for du, dv in _splat_offsets(point_radius_px):
        pu, pv = u_px + du, v_px + dv
        inside = (pu >= 0) & (pu < width) & (pv >= 0) & (pv < height)
        pixels.append(pv[inside] * width + pu[inside])
        owners.append(front[inside])
    pixels = np.concatenate(pixels)
    owners = np.concatenate(owners)
    # sort by pixel, then depth, then point index: first entry wins
    order = np.lexsort((owners, z[owners], pixels))
    pixels, owners = pixels[order], owners[order]
    winners = np.unique(pixels, return_index=True)[1]
    pixels, owners = pixels[winners], owners[winners]

    rows, cols = np.divmod(pixels, width)
    depth[rows, cols] = z[owners]
    color[rows, cols] = scene.colors[owners]
    source_id[rows, cols] = scene.point_ids[owners]
    subpixel[rows, cols, 0] = u[owners]
    subpixel[rows, cols, 1] = v[owners]
    logging.debug('Frame %s: %s of %s pixels covered', frame_index,
                  len(pixels), width * height)
    return Frame(frame_index, intrinsics, pose, depth, color, source_id,
                 subpixel)


def perturb_frame_colors(frame: Frame, strength: float, seed: int) -> Frame:
    """Apply a view-dependent appearance change to a frame.

    A per-channel gain 1 + N(0, strength) and offset N(0, strength / 2)
    is drawn from (seed, frame_index); valid pixels are transformed and
    clipped to [0, 1]. strength 0 returns the frame unchanged.

    """
    if strength <= 0:
        return frame
    rng = np.random.default_rng([seed, frame.frame_index])
    gain = 1.0 + strength * rng.standard_normal(3)
    offset = 0.5 * strength * rng.standard_normal(3)
    color = frame.color.copy()
    valid = frame.valid
    color[valid] = np.clip(color[valid] * gain + offset, 0.0, 1.0)
    return dataclasses.replace(frame, color=color)


def frame_to_partial_cloud(frame: Frame, pixel_entities: typing.Any
                           ) -> PartialCloud:
    """Backproject every valid-depth pixel of a frame.

    Each point inherits the entity of its pixel. Pixels with a finite
    subpixel entry are backprojected from it, the others from their
    integer coordinates.

    Args:
        frame: RGB-D frame
        pixel_entities: pgov.entity_oracle.PixelEntityMap of the frame

    Returns:
        Partial cloud in row-major pixel order

    Raises:
        DimMismatchError: If the entity raster does not match the frame.

    """
    raster = pixel_entities.raster
    if raster.shape != frame.depth.shape:
        raise pgov.errors.DimMismatchError(
            f'frame {frame.frame_index}: entity raster {raster.shape} vs '
            f'depth raster {frame.depth.shape}')
    rows, cols = np.nonzero(frame.valid)
    u, v = cols.astype(np.float64), rows.astype(np.float64)
    if frame.subpixel is not None:
        exact = frame.subpixel[rows, cols]
        known = np.all(np.isfinite(exact), axis=1)
        u[known], v[known] = exact[known, 0], exact[known, 1]
    positions = backproject_pixels(u, v, frame.depth[rows, cols],
                                   frame.intrinsics, frame.pose)
    if frame.source_id is None:
        source_ids = np.full(len(rows), SENTINEL_NONE, dtype=np.int64)
    else:
        source_ids = frame.source_id[rows, cols].astype(np.int64)
    return PartialCloud(positions=positions,
                        colors=frame.color[rows, cols],
                        entity_ids=raster[rows, cols].astype(np.int64),
                        source_point_ids=source_ids,
                        source_pixels=np.stack([cols, rows], axis=1),
                        frame_index=frame.frame_index,
                        vocabulary=tuple(pixel_entities.vocabulary))


def _pack_keys(keys: np.ndarray) -> np.ndarray:
    """Pack integer voxel keys (Nx3) into one int64 per row."""
    shifted = keys + _KEY_OFFSET
    if shifted.size and (shifted.min() < 0
                         or shifted.max() >= (1 << _KEY_BITS)):
        raise ValueError('voxel keys out of range; cell size too small '
                         'for the extent of the cloud')
    return (shifted[:, 0] << (2 * _KEY_BITS)) \
        | (shifted[:, 1] << _KEY_BITS) | shifted[:, 2]


class VoxelHash:
    """Uniform voxel hash over a point set for fixed-radius queries.

    Exact as long as the query radius does not exceed the cell size
    (the 27-cell neighbourhood then holds every candidate).

    """

    def __init__(self, points: np.ndarray, cell_size: float):
        self.points = np.asarray(points, dtype=np.float64)
        self.cell_size = float(cell_size)
        packed = _pack_keys(self.keys(self.points))
        self._order = np.argsort(packed, kind='stable')
        self._cells, self._starts, self._counts = np.unique(
            packed[self._order], return_index=True, return_counts=True)

    def keys(self, points: np.ndarray) -> np.ndarray:
        """Integer voxel key per point."""
        return np.floor(points / self.cell_size).astype(np.int64)

    def pairs_within(self, queries: np.ndarray, radius: float
                     ) -> typing.Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """All (query, point) pairs closer than or equal to `radius`.

        Returns:
            query indices, point indices, distances (unsorted)

        """
        queries = np.asarray(queries, dtype=np.float64)
        query_keys = self.keys(queries)
        found_q, found_p = [], []
        for offset in np.ndindex(3, 3, 3):
            packed = _pack_keys(query_keys + np.array(offset) - 1)
            slot = np.searchsorted(self._cells, packed)
            slot = np.minimum(slot, len(self._cells) - 1)
            hit = np.nonzero(self._cells[slot] == packed)[0]
            if len(hit) == 0:
                continue
            counts = self._counts[slot[hit]]
            starts = np.repeat(self._starts[slot[hit]], counts)
            within = np.arange(counts.sum()) \
                - np.repeat(np.cumsum(counts) - counts, counts)
            found_q.append(np.repeat(hit, counts))
            found_p.append(self._order[starts + within])
        if not found_q:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty, np.zeros(0)
        query_idx = np.concatenate(found_q)
        point_idx = np.concatenate(found_p)
        distance = np.linalg.norm(queries[query_idx]
                                  - self.points[point_idx], axis=1)
        close = distance <= radius
        return query_idx[close], point_idx[close], distance[close]


def match_points(cloud_a: PartialCloud, cloud_b: PartialCloud, mode: str,
                 radius_m: typing.Optional[float] = None) -> MatchSet:
    """Find the same physical points in two partial clouds.

    by_id pairs every point of A with the first point of B that has the
    same source point id. by_radius pairs each point of A (ascending)
    with its nearest still unused point of B within radius_m; equal
    distances go to the lower B index.

    Args:
        cloud_a, cloud_b: partial clouds
        mode: 'by_id' or 'by_radius'
        radius_m: matching radius, by_radius only

    Returns:
        Match set sorted by A index

    Raises:
        ValueError: If mode is unknown or by_radius lacks a positive
        radius.

    """
    if mode == 'by_id':
        ids_b, first_b = np.unique(cloud_b.source_point_ids,
                                   return_index=True)
        ids_a = cloud_a.source_point_ids
        if len(ids_b) == 0:
            return MatchSet(np.zeros((0, 2), dtype=np.int64), mode)
        slot = np.minimum(np.searchsorted(ids_b, ids_a), len(ids_b) - 1)
        hit = (ids_b[slot] == ids_a) & (ids_a != SENTINEL_NONE)
        index_a = np.nonzero(hit)[0]
        pairs = np.stack([index_a, first_b[slot[index_a]]], axis=1)
        return MatchSet(pairs.astype(np.int64), mode)
    if mode != 'by_radius':
        raise ValueError(f'unknown match mode: {mode}')
    if radius_m is None or not radius_m > 0:
        raise ValueError('by_radius matching needs a positive radius')
    if len(cloud_a) == 0 or len(cloud_b) == 0:
        return MatchSet(np.zeros((0, 2), dtype=np.int64), mode, radius_m)
    grid = VoxelHash(cloud_b.positions, radius_m)
    index_a, index_b, distance = grid.pairs_within(cloud_a.positions,
                                                   radius_m)
    order = np.lexsort((index_b, distance, index_a))
    used_b = np.zeros(len(cloud_b), dtype=bool)
    matched_a = np.zeros(len(cloud_a), dtype=bool)
    pairs = []
    for a, b in zip(index_a[order].tolist(), index_b[order].tolist()):
        if matched_a[a] or used_b[b]:
            continue
        matched_a[a] = True
        used_b[b] = True
        pairs.append((a, b))
    pairs = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    return MatchSet(pairs, mode, radius_m)
