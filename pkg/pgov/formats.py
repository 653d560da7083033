#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""Reads and writes every artifact of a run.

Formats:
    * pgov-points v1: text scene file (`#pgov-points v1 count=N
      categories=K`, K `#cat <index> <name>` lines, N `x y z r g b label
      point_id` lines, floats with 9 significant digits)
    * frames: frame_%06d.depth (f32), .color (f32 x 3), .srcid (i64,
      -1 = none), .subpix (f64 x 2, exact projection of the pixel owner,
      NaN = none), .meta.json
    * entity masks: frame_%06d.entmask (i16, -1 = unlabeled) and
      frame_%06d.vocab.json (JSON string array)
    * encoder checkpoints: one JSON header line, then the f64 blob of
      W0, b0, W1, b1, ... (row-major)
    * pseudo labels: fixed header, then packed (i32, f32, u8) records
    * CSV: loss logs, evaluation report, confusion matrix, ablation table

All binary data is little-endian, all JSON is UTF-8. Writers go through
pgov.helper.atomic_write. Readers raise DataFormatError (or its
FormatError subclass) naming the file and the byte offset.

"""
import csv
import io
import json
import math
import os
import struct
import typing
import numpy as np
import pgov.embedding
import pgov.errors
import pgov.geometry
import pgov.helper
import pgov.pseudo_label
import pgov.scene_synth
import pgov.trainer

POINTS_MAGIC = '#pgov-points v1'
CHECKPOINT_FORMAT = 'pgov-encoder'
FRAME_STEM = 'frame_{:06d}'
PSEUDO_MAGIC = b'PGPL'
PSEUDO_VERSION = 1
# magic, version, points, entities, voxel_size, repetitions, temperature,
# confidence_threshold, context_radius, seed
PSEUDO_HEADER = struct.Struct('<4sIIIdIdddQ')
PSEUDO_RECORD = np.dtype([('entity', '<i4'), ('confidence', '<f4'),
                          ('accepted', 'u1')])
LOSS_COLUMNS = ('epoch', 'step', 'alignment', 'consistency', 'total')
ABLATION_COLUMNS = ('preset', 'seed', 'miou', 'macc')


def _read_bytes(path: str) -> bytes:
    if not os.path.isfile(path):
        raise pgov.errors.MissingArtifactsError(f'missing file: {path}')
    with open(path, 'rb') as binary:
        return binary.read()


def _float(value: float) -> str:
    return '%.9g' % value


# JSON

def dump_json(data: typing.Any) -> str:
    """Canonical JSON: sorted keys, 2-space indent, trailing newline."""
    return json.dumps(data, sort_keys=True, indent=2,
                      ensure_ascii=False) + '\n'


def write_json(path: str, data: typing.Any) -> None:
    pgov.helper.atomic_write(path, dump_json(data))


def read_json(path: str) -> typing.Any:
    """Parse a JSON file.

    Raises:
        MissingArtifactsError: If the file does not exist.
        DataFormatError: If it is not UTF-8 JSON.

    """
    raw = _read_bytes(path)
    try:
        text = raw.decode('utf-8')
    except UnicodeDecodeError as error:
        raise pgov.errors.DataFormatError('not UTF-8', path,
                                          error.start) from error
    try:
        return json.loads(text)
    except json.JSONDecodeError as error:
        offset = len(text[:error.pos].encode('utf-8'))
        raise pgov.errors.DataFormatError(error.msg, path,
                                          offset) from error


# scenes

def write_scene(path: str, scene: pgov.scene_synth.GlobalScene) -> None:
    """Write a scene in the pgov-points v1 format."""
    lines = [f'{POINTS_MAGIC} count={len(scene)} '
             f'categories={len(scene.categories)}']
    lines.extend(f'#cat {index} {name}'
                 for index, name in enumerate(scene.categories))
    for position, color, label, point_id in zip(
            scene.positions.tolist(), scene.colors.tolist(),
            scene.gt_labels.tolist(), scene.point_ids.tolist()):
        values = ' '.join(_float(v) for v in position + color)
        lines.append(f'{values} {label} {point_id}')
    pgov.helper.atomic_write(path, '\n'.join(lines) + '\n')


def read_scene(path: str) -> pgov.scene_synth.GlobalScene:
    """Read a pgov-points v1 file.

    Raises:
        DataFormatError: On a malformed header, category or point line;
        the offset is the start of the line.

    """
    raw = _read_bytes(path)
    offset = 0
    lines = []
    for line in raw.split(b'\n'):
        lines.append((offset, line.decode('utf-8', errors='replace')))
        offset += len(line) + 1
    if lines and lines[-1][1] == '':
        lines.pop()

    def fail(message, at):
        raise pgov.errors.DataFormatError(message, path, at)

    if not lines or not lines[0][1].startswith(POINTS_MAGIC):
        fail(f'expected "{POINTS_MAGIC}" header', 0)
    try:
        fields = dict(item.split('=', 1)
                      for item in lines[0][1][len(POINTS_MAGIC):].split())
        count, n_categories = int(fields['count']), int(fields['categories'])
    except (ValueError, KeyError):
        fail('header needs count=N categories=K', 0)
    if len(lines) != 1 + n_categories + count:
        at = lines[-1][0] if len(lines) > 1 + n_categories + count \
            else len(raw)
        fail(f'expected {n_categories} category and {count} point lines, '
             f'found {len(lines) - 1} lines', at)
    categories = []
    for index, (at, line) in enumerate(lines[1:1 + n_categories]):
        parts = line.split(' ', 2)
        if len(parts) != 3 or parts[0] != '#cat' or parts[1] != str(index):
            fail(f'expected "#cat {index} <name>"', at)
        categories.append(parts[2])
    table = np.zeros((count, 6))
    labels = np.zeros(count, dtype=np.int64)
    point_ids = np.zeros(count, dtype=np.int64)
    for row, (at, line) in enumerate(lines[1 + n_categories:]):
        parts = line.split()
        try:
            if len(parts) != 8:
                raise ValueError(line)
            table[row] = [float(v) for v in parts[:6]]
            labels[row] = int(parts[6])
            point_ids[row] = int(parts[7])
        except ValueError:
            fail('expected "x y z r g b label point_id"', at)
        if not np.all(np.isfinite(table[row])) \
                or not -1 <= labels[row] < n_categories:
            fail('non-finite value or label outside the categories', at)
    if len(np.unique(point_ids)) != count:
        fail('point ids are not unique', 0)
    return pgov.scene_synth.GlobalScene(point_ids=point_ids,
                                        positions=table[:, :3],
                                        colors=table[:, 3:],
                                        gt_labels=labels,
                                        categories=tuple(categories))


# frames

def frame_path(frames_dir: str, frame_index: int, suffix: str) -> str:
    return os.path.join(frames_dir,
                        FRAME_STEM.format(frame_index) + suffix)


def list_frames(frames_dir: str) -> typing.List[int]:
    """Frame indices with a meta file, ascending."""
    if not os.path.isdir(frames_dir):
        raise pgov.errors.MissingArtifactsError(
            f'missing frames directory: {frames_dir}')
    indices = []
    for name in os.listdir(frames_dir):
        if name.startswith('frame_') and name.endswith('.meta.json'):
            stem = name[len('frame_'):-len('.meta.json')]
            if stem.isdigit():
                indices.append(int(stem))
    return sorted(indices)


def _read_raster(path: str, dtype: str, shape: tuple,
                 error: typing.Type[pgov.errors.DataFormatError]
                 ) -> np.ndarray:
    raw = _read_bytes(path)
    item = np.dtype(dtype).itemsize
    expected = int(np.prod(shape)) * item
    if len(raw) < expected:
        raise error(f'truncated raster: expected {expected} bytes, got '
                    f'{len(raw)}', path, len(raw))
    if len(raw) > expected:
        raise error(f'trailing bytes after {expected} bytes', path,
                    expected)
    return np.frombuffer(raw, dtype=dtype).reshape(shape)


def write_frame(frames_dir: str, frame: pgov.geometry.Frame) -> None:
    """Write the rasters and the meta file of a frame."""
    index = frame.frame_index
    intrinsics = frame.intrinsics
    pgov.helper.atomic_write(frame_path(frames_dir, index, '.depth'),
                             frame.depth.astype('<f4').tobytes())
    pgov.helper.atomic_write(frame_path(frames_dir, index, '.color'),
                             frame.color.astype('<f4').tobytes())
    if frame.source_id is not None:
        pgov.helper.atomic_write(frame_path(frames_dir, index, '.srcid'),
                                 frame.source_id.astype('<i8').tobytes())
    if frame.subpixel is not None:
        pgov.helper.atomic_write(frame_path(frames_dir, index, '.subpix'),
                                 frame.subpixel.astype('<f8').tobytes())
    meta = dict(width=intrinsics.width, height=intrinsics.height,
                fx=intrinsics.fx, fy=intrinsics.fy, cx=intrinsics.cx,
                cy=intrinsics.cy,
                pose=frame.pose.as_matrix().reshape(-1).tolist(),
                frame_index=index)
    write_json(frame_path(frames_dir, index, '.meta.json'), meta)


def read_frame_meta(frames_dir: str, frame_index: int
                    ) -> typing.Tuple[pgov.geometry.CameraIntrinsics,
                                      pgov.geometry.CameraPose]:
    path = frame_path(frames_dir, frame_index, '.meta.json')
    meta = read_json(path)
    try:
        intrinsics = pgov.geometry.CameraIntrinsics(
            fx=float(meta['fx']), fy=float(meta['fy']),
            cx=float(meta['cx']), cy=float(meta['cy']),
            width=int(meta['width']), height=int(meta['height']))
        pose = pgov.geometry.CameraPose.from_matrix(
            np.array(meta['pose'], dtype=np.float64).reshape(4, 4))
    except (KeyError, TypeError, ValueError) as error:
        raise pgov.errors.DataFormatError(f'invalid frame meta: {error}',
                                          path, 0) from error
    return intrinsics, pose


def read_frame(frames_dir: str, frame_index: int) -> pgov.geometry.Frame:
    """Read a frame written by write_frame.

    The .srcid and .subpix files are optional.

    Raises:
        DataFormatError: If a raster is truncated or too long.

    """
    intrinsics, pose = read_frame_meta(frames_dir, frame_index)
    shape = intrinsics.shape
    depth = _read_raster(frame_path(frames_dir, frame_index, '.depth'),
                         '<f4', shape, pgov.errors.DataFormatError)
    color = _read_raster(frame_path(frames_dir, frame_index, '.color'),
                         '<f4', shape + (3,), pgov.errors.DataFormatError)
    source_path = frame_path(frames_dir, frame_index, '.srcid')
    source_id = None
    if os.path.isfile(source_path):
        source_id = _read_raster(source_path, '<i8', shape,
                                 pgov.errors.DataFormatError).astype(
                                     np.int64)
    subpixel_path = frame_path(frames_dir, frame_index, '.subpix')
    subpixel = None
    if os.path.isfile(subpixel_path):
        subpixel = _read_raster(subpixel_path, '<f8', shape + (2,),
                                pgov.errors.DataFormatError).astype(
                                    np.float64)
    depth = depth.astype(np.float64)
    if not np.all(np.isfinite(depth)) or np.any(depth < 0):
        raise pgov.errors.DataFormatError(
            'depth must be finite and non-negative',
            frame_path(frames_dir, frame_index, '.depth'), 0)
    return pgov.geometry.Frame(frame_index, intrinsics, pose, depth,
                               color.astype(np.float64), source_id,
                               subpixel)


# entity masks and vocabularies

def write_entity_mask(path: str, raster: np.ndarray) -> None:
    pgov.helper.atomic_write(path, raster.astype('<i2').tobytes())


def read_entity_mask(path: str, shape: typing.Tuple[int, int]
                     ) -> np.ndarray:
    """Read an i16 entity raster.

    Raises:
        FormatError: If the size does not match `shape` or an id is
        below -1.

    """
    raster = _read_raster(path, '<i2', shape, pgov.errors.FormatError)
    bad = np.nonzero(raster.reshape(-1) < -1)[0]
    if len(bad):
        raise pgov.errors.FormatError(f'invalid entity id '
                                      f'{raster.reshape(-1)[bad[0]]}',
                                      path, int(bad[0]) * 2)
    return raster.astype(np.int64)


def write_vocabulary(path: str, vocabulary: typing.Sequence[str]) -> None:
    pgov.helper.atomic_write(path, json.dumps(list(vocabulary),
                                              ensure_ascii=False) + '\n')


def read_vocabulary(path: str) -> typing.Tuple[str, ...]:
    """Read a JSON array of unique strings.

    Raises:
        FormatError: If the file is not such an array.

    """
    try:
        data = read_json(path)
    except pgov.errors.DataFormatError as error:
        raise pgov.errors.FormatError(error.reason, error.path,
                                      error.offset) from error
    if not isinstance(data, list) \
            or not all(isinstance(name, str) for name in data):
        raise pgov.errors.FormatError('expected a JSON array of strings',
                                      path, 0)
    if len(set(data)) != len(data):
        raise pgov.errors.FormatError('duplicate entities', path, 0)
    return tuple(data)


# checkpoints

def write_checkpoint(path: str,
                     params: pgov.embedding.EncoderParams) -> None:
    header = json.dumps(dict(format=CHECKPOINT_FORMAT, version=1,
                             layer_sizes=list(params.layer_sizes),
                             seed=params.seed, step=params.step),
                        sort_keys=True)
    blob = b''.join(array.astype('<f8').tobytes()
                    for array in params.arrays())
    pgov.helper.atomic_write(path, header.encode('utf-8') + b'\n' + blob)


def read_checkpoint(path: str) -> pgov.embedding.EncoderParams:
    """Read an encoder checkpoint.

    Raises:
        DataFormatError: On a malformed header or a blob of wrong size.

    """
    raw = _read_bytes(path)
    end = raw.find(b'\n')
    if end < 0:
        raise pgov.errors.DataFormatError('missing header line', path,
                                          len(raw))
    try:
        header = json.loads(raw[:end].decode('utf-8'))
        if header.get('format') != CHECKPOINT_FORMAT:
            raise ValueError('not an encoder checkpoint')
        sizes = tuple(int(s) for s in header['layer_sizes'])
        seed, step = int(header['seed']), int(header['step'])
    except (ValueError, KeyError, TypeError) as error:
        raise pgov.errors.DataFormatError(f'bad header: {error}', path,
                                          0) from error
    shapes = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        shapes.extend(((fan_in, fan_out), (fan_out,)))
    expected = sum(int(np.prod(shape)) for shape in shapes) * 8
    blob = raw[end + 1:]
    if len(blob) != expected:
        raise pgov.errors.DataFormatError(
            f'expected {expected} parameter bytes, got {len(blob)}', path,
            end + 1 + min(len(blob), expected))
    values = np.frombuffer(blob, dtype='<f8').astype(np.float64)
    arrays, start = [], 0
    for shape in shapes:
        size = int(np.prod(shape))
        arrays.append(values[start:start + size].reshape(shape).copy())
        start += size
    return pgov.embedding.EncoderParams(sizes, tuple(arrays[0::2]),
                                        tuple(arrays[1::2]), seed, step)


# pseudo labels

def write_pseudo_labels(path: str,
                        labels: pgov.pseudo_label.PseudoLabelSet) -> None:
    header = PSEUDO_HEADER.pack(PSEUDO_MAGIC, PSEUDO_VERSION, len(labels),
                                len(labels.vocabulary), labels.voxel_size,
                                labels.repetitions, labels.temperature,
                                labels.confidence_threshold,
                                labels.context_radius, labels.seed)
    records = np.zeros(len(labels), dtype=PSEUDO_RECORD)
    records['entity'] = labels.entity_ids
    records['confidence'] = labels.confidence
    records['accepted'] = labels.accepted
    pgov.helper.atomic_write(path, header + records.tobytes())


def read_pseudo_labels(path: str, vocabulary: typing.Sequence[str]
                       ) -> pgov.pseudo_label.PseudoLabelSet:
    """Read a pseudo-label file; `vocabulary` is its scene vocabulary.

    Raises:
        DataFormatError: On a bad header, wrong size or an entity id
        outside the vocabulary.

    """
    raw = _read_bytes(path)
    if len(raw) < PSEUDO_HEADER.size:
        raise pgov.errors.DataFormatError('truncated header', path,
                                          len(raw))
    (magic, version, count, n_entities, voxel_size, repetitions,
     temperature, threshold, radius, seed) = PSEUDO_HEADER.unpack_from(raw)
    if magic != PSEUDO_MAGIC or version != PSEUDO_VERSION:
        raise pgov.errors.DataFormatError('not a pseudo-label file', path, 0)
    if n_entities != len(vocabulary):
        raise pgov.errors.DataFormatError(
            f'{n_entities} entities in header, vocabulary has '
            f'{len(vocabulary)}', path, 12)
    expected = PSEUDO_HEADER.size + count * PSEUDO_RECORD.itemsize
    if len(raw) != expected:
        raise pgov.errors.DataFormatError(
            f'expected {expected} bytes, got {len(raw)}', path,
            min(len(raw), expected))
    records = np.frombuffer(raw, dtype=PSEUDO_RECORD,
                            offset=PSEUDO_HEADER.size)
    entity_ids = records['entity'].astype(np.int64)
    bad = np.nonzero((entity_ids < 0) | (entity_ids >= n_entities))[0]
    if len(bad):
        raise pgov.errors.DataFormatError(
            f'entity id {entity_ids[bad[0]]} outside the vocabulary', path,
            PSEUDO_HEADER.size + int(bad[0]) * PSEUDO_RECORD.itemsize)
    return pgov.pseudo_label.PseudoLabelSet(
        probabilities=None, entity_ids=entity_ids,
        confidence=records['confidence'].astype(np.float64),
        accepted=records['accepted'].astype(bool),
        vocabulary=tuple(vocabulary), voxel_size=voxel_size,
        repetitions=repetitions, temperature=temperature,
        confidence_threshold=threshold, context_radius=radius, seed=seed)


# CSV

def _csv_text(header: typing.Sequence[str],
              rows: typing.Iterable[typing.Sequence[typing.Any]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


def _read_csv(path: str, header: typing.Sequence[str]
              ) -> typing.List[typing.Tuple[int, typing.List[str]]]:
    """Rows of a CSV file with their byte offsets; checks the header."""
    raw = _read_bytes(path)
    rows, offset = [], 0
    for line in raw.split(b'\n'):
        if line:
            rows.append((offset, next(csv.reader(
                [line.decode('utf-8', errors='replace')]))))
        offset += len(line) + 1
    if not rows or tuple(rows[0][1]) != tuple(header):
        raise pgov.errors.DataFormatError(
            f'expected header {",".join(header)}', path, 0)
    return rows[1:]


def write_loss_log(path: str, log: typing.Sequence[tuple]) -> None:
    pgov.helper.atomic_write(path, _csv_text(
        LOSS_COLUMNS, ((row[0], row[1], repr(float(row[2])),
                        repr(float(row[3])), repr(float(row[4])))
                       for row in log)))


def read_loss_log(path: str) -> typing.List[pgov.trainer.LossRow]:
    log = []
    for offset, row in _read_csv(path, LOSS_COLUMNS):
        try:
            log.append(pgov.trainer.LossRow(int(row[0]), int(row[1]),
                                            float(row[2]), float(row[3]),
                                            float(row[4])))
        except (ValueError, IndexError) as error:
            raise pgov.errors.DataFormatError(
                f'bad loss row: {error}', path, offset) from error
    return log


def eval_report_rows(report: 'pgov.metrics.EvalReport',
                     categories: typing.Sequence[str],
                     extra: typing.Optional[typing.Dict[str, float]] = None
                     ) -> typing.List[typing.Tuple[str, str, str]]:
    """Rows (metric, class, value) on both 0-1 and percent scales."""
    rows = []

    def add(metric, name, value):
        if isinstance(value, (int, np.integer)):
            rows.append((metric, name, str(int(value))))
            return
        rows.append((metric, name, repr(float(value))))
        rows.append((f'{metric}_pct', name,
                     repr(round(100.0 * float(value), 4))))

    add('miou', 'all', report.miou)
    add('macc', 'all', report.macc)
    for split in ('miou_base', 'miou_novel', 'hiou'):
        if getattr(report, split) is not None:
            add(split, 'all', getattr(report, split))
    for index, name in enumerate(categories):
        if report.included[index]:
            add('iou', name, report.iou[index])
        if not math.isnan(report.accuracy[index]):
            add('acc', name, report.accuracy[index])
        add('unmatched', name, report.unmatched[index])
    for metric, value in (extra or {}).items():
        add(metric, 'all', value)
    return rows


def write_eval_report(path: str, rows: typing.Sequence[tuple]) -> None:
    pgov.helper.atomic_write(path, _csv_text(('metric', 'class', 'value'),
                                             rows))


def read_eval_report(path: str) -> typing.Dict[typing.Tuple[str, str],
                                               float]:
    """(metric, class) -> value."""
    values = {}
    for offset, row in _read_csv(path, ('metric', 'class', 'value')):
        try:
            values[(row[0], row[1])] = float(row[2])
        except (ValueError, IndexError) as error:
            raise pgov.errors.DataFormatError(
                f'bad report row: {error}', path, offset) from error
    return values


def write_confusion(path: str, counts: np.ndarray,
                    categories: typing.Sequence[str]) -> None:
    """K x K grid with category names as header row and column."""
    rows = [[name] + [str(int(c)) for c in counts[index]]
            for index, name in enumerate(categories)]
    pgov.helper.atomic_write(path, _csv_text(['gt\\pred', *categories],
                                             rows))


def write_ablation_table(path: str,
                         rows: typing.Sequence[tuple]) -> None:
    pgov.helper.atomic_write(path, _csv_text(
        ABLATION_COLUMNS, ((preset, seed, repr(float(miou)),
                            repr(float(macc)))
                           for preset, seed, miou, macc in rows)))


def read_ablation_table(path: str) -> typing.List[tuple]:
    rows = []
    for offset, row in _read_csv(path, ABLATION_COLUMNS):
        try:
            rows.append((row[0], int(row[1]), float(row[2]),
                         float(row[3])))
        except (ValueError, IndexError) as error:
            raise pgov.errors.DataFormatError(
                f'bad ablation row: {error}', path, offset) from error
    return rows
