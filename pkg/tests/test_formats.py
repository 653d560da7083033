#!/usr/bin/env python3
# -*- coding: utf-8 -*-
import json
import numpy as np
import pytest
import pgov.errors
import pgov.formats
import pgov.geometry
import pgov.metrics
import pgov.pseudo_label
import pgov.trainer


def _pseudo_set(count=5):
    return pgov.pseudo_label.PseudoLabelSet(
        probabilities=None, entity_ids=np.arange(count) % 2,
        confidence=np.linspace(0.25, 1.0, count),
        accepted=np.arange(count) % 2 == 0, vocabulary=('chair', 'table'),
        voxel_size=0.05, repetitions=8, temperature=0.07,
        confidence_threshold=0.5, context_radius=0.0, seed=123)


def test_dump_json_is_canonical():
    text = pgov.formats.dump_json({'b': 1, 'a': [1, 2], 'c': 'ü'})
    assert text == '{\n  "a": [\n    1,\n    2\n  ],\n  "b": 1,\n  ' \
        '"c": "ü"\n}\n'


def test_read_json_errors(tmp_path):
    with pytest.raises(pgov.errors.MissingArtifactsError):
        pgov.formats.read_json(str(tmp_path / 'absent.json'))
    broken = tmp_path / 'broken.json'
    broken.write_text('{"a": 1,\n "b": }', encoding='utf-8')
    with pytest.raises(pgov.errors.DataFormatError) as error:
        pgov.formats.read_json(str(broken))
    assert error.value.offset == 15
    assert str(broken) in str(error.value)


def test_scene_file(tmp_path, scene_factory):
    scene = scene_factory([[0.125, 1.0, 2.5], [3.0, 0.1, 0.2]], [1, -1],
                          categories=('chair', 'coffee table'),
                          colors=[[0.5, 0.25, 1.0], [0.0, 0.1, 0.3]])
    path = str(tmp_path / 'scene.pgov')
    pgov.formats.write_scene(path, scene)
    lines = (tmp_path / 'scene.pgov').read_text().splitlines()
    assert lines[:3] == ['#pgov-points v1 count=2 categories=2',
                         '#cat 0 chair', '#cat 1 coffee table']
    assert lines[3] == '0.125 1 2.5 0.5 0.25 1 1 0'
    again = pgov.formats.read_scene(path)
    assert again.categories == scene.categories
    np.testing.assert_allclose(again.positions, scene.positions, rtol=1e-8)
    np.testing.assert_allclose(again.colors, scene.colors, rtol=1e-8)
    assert again.gt_labels.tolist() == [1, -1]
    assert again.point_ids.tolist() == [0, 1]


@pytest.mark.parametrize('content, offset', [
    ('#pgov-points v2 count=1 categories=0\n', 0),
    ('#pgov-points v1 count=1 categories=1\n#cat 0 chair\n', 50),
    ('#pgov-points v1 count=1 categories=1\n#cat 1 chair\n0 0 0 0 0 0 0 0\n',
     37),
    ('#pgov-points v1 count=1 categories=1\n#cat 0 chair\n0 0 0 0 0 0 5 0\n',
     50),
])
def test_scene_file_errors(tmp_path, content, offset):
    path = tmp_path / 'scene.pgov'
    path.write_bytes(content.encode('utf-8'))
    with pytest.raises(pgov.errors.DataFormatError) as error:
        pgov.formats.read_scene(str(path))
    assert error.value.offset == offset


def test_frame_files(tmp_path, toy_camera, scene_factory):
    intrinsics, pose = toy_camera
    scene = scene_factory([[0.0, 0.0, 2.0], [0.3, 0.1, 1.5]], [0, 1],
                          colors=[[1.0, 0.5, 0.25], [0.0, 1.0, 0.0]])
    frame = pgov.geometry.render_frame(scene, intrinsics, pose,
                                       frame_index=7)
    pgov.formats.write_frame(str(tmp_path), frame)
    assert pgov.formats.list_frames(str(tmp_path)) == [7]
    assert (tmp_path / 'frame_000007.depth').stat().st_size == 10 * 8 * 4
    assert (tmp_path / 'frame_000007.srcid').stat().st_size == 10 * 8 * 8
    assert (tmp_path / 'frame_000007.subpix').stat().st_size == 10 * 8 * 16
    again = pgov.formats.read_frame(str(tmp_path), 7)
    np.testing.assert_array_equal(again.subpixel, frame.subpixel)
    np.testing.assert_array_equal(again.depth, frame.depth)
    np.testing.assert_array_equal(again.color, frame.color)
    np.testing.assert_array_equal(again.source_id, frame.source_id)
    assert again.intrinsics == intrinsics
    np.testing.assert_array_equal(again.pose.as_matrix(), pose.as_matrix())


def test_truncated_depth(tmp_path, toy_camera, scene_factory):
    intrinsics, pose = toy_camera
    frame = pgov.geometry.render_frame(scene_factory([[0, 0, 2.0]], [0]),
                                       intrinsics, pose)
    pgov.formats.write_frame(str(tmp_path), frame)
    depth = tmp_path / 'frame_000000.depth'
    depth.write_bytes(depth.read_bytes()[:100])
    with pytest.raises(pgov.errors.DataFormatError) as error:
        pgov.formats.read_frame(str(tmp_path), 0)
    assert error.value.offset == 100
    assert error.value.path == str(depth)


def test_list_frames_needs_directory(tmp_path):
    with pytest.raises(pgov.errors.MissingArtifactsError):
        pgov.formats.list_frames(str(tmp_path / 'frames'))


def test_entity_mask_errors(tmp_path):
    path = str(tmp_path / 'm.entmask')
    pgov.formats.write_entity_mask(path, np.array([[0, -1], [-3, 1]]))
    with pytest.raises(pgov.errors.FormatError) as error:
        pgov.formats.read_entity_mask(path, (2, 2))
    assert error.value.offset == 4
    with pytest.raises(pgov.errors.FormatError) as error:
        pgov.formats.read_entity_mask(path, (1, 1))
    assert error.value.offset == 2


def test_vocabulary_errors(tmp_path):
    path = tmp_path / 'v.json'
    path.write_text('["chair", "chair"]')
    with pytest.raises(pgov.errors.FormatError):
        pgov.formats.read_vocabulary(str(path))
    path.write_text('{"chair": 1}')
    with pytest.raises(pgov.errors.FormatError):
        pgov.formats.read_vocabulary(str(path))
    pgov.formats.write_vocabulary(str(path), ['sofa', 'chair'])
    assert pgov.formats.read_vocabulary(str(path)) == ('sofa', 'chair')


def test_checkpoint(tmp_path, small_params):
    params = small_params.with_arrays(small_params.arrays(), step=17)
    path = str(tmp_path / 'encoder.ckpt')
    pgov.formats.write_checkpoint(path, params)
    raw = (tmp_path / 'encoder.ckpt').read_bytes()
    header, blob = raw.split(b'\n', 1)
    assert json.loads(header) == dict(format='pgov-encoder', version=1,
                                      layer_sizes=[6, 5, 4], seed=3,
                                      step=17)
    assert len(blob) == (6 * 5 + 5 + 5 * 4 + 4) * 8
    again = pgov.formats.read_checkpoint(path)
    assert again.layer_sizes == (6, 5, 4) and again.step == 17
    for mine, theirs in zip(again.arrays(), params.arrays()):
        np.testing.assert_array_equal(mine, theirs)


def test_truncated_checkpoint(tmp_path, small_params):
    path = tmp_path / 'encoder.ckpt'
    pgov.formats.write_checkpoint(str(path), small_params)
    raw = path.read_bytes()
    path.write_bytes(raw[:-8])
    with pytest.raises(pgov.errors.DataFormatError) as error:
        pgov.formats.read_checkpoint(str(path))
    assert error.value.offset == len(raw) - 8
    path.write_bytes(b'{"format": "other"}\n')
    with pytest.raises(pgov.errors.DataFormatError) as error:
        pgov.formats.read_checkpoint(str(path))
    assert error.value.offset == 0


def test_pseudo_label_file(tmp_path):
    labels = _pseudo_set()
    path = str(tmp_path / 'pseudo_labels.bin')
    pgov.formats.write_pseudo_labels(path, labels)
    size = pgov.formats.PSEUDO_HEADER.size + 5 * 9
    assert (tmp_path / 'pseudo_labels.bin').stat().st_size == size
    again = pgov.formats.read_pseudo_labels(path, ('chair', 'table'))
    assert again.entity_ids.tolist() == labels.entity_ids.tolist()
    np.testing.assert_allclose(again.confidence, labels.confidence,
                               rtol=1e-6)
    assert again.accepted.tolist() == labels.accepted.tolist()
    assert (again.voxel_size, again.repetitions, again.seed) == (0.05, 8, 123)
    assert again.probabilities is None


def test_pseudo_label_file_errors(tmp_path):
    path = tmp_path / 'pseudo_labels.bin'
    pgov.formats.write_pseudo_labels(str(path), _pseudo_set())
    with pytest.raises(pgov.errors.DataFormatError) as error:
        pgov.formats.read_pseudo_labels(str(path), ('chair',))
    assert error.value.offset == 12
    raw = path.read_bytes()
    path.write_bytes(raw[:-3])
    with pytest.raises(pgov.errors.DataFormatError) as error:
        pgov.formats.read_pseudo_labels(str(path), ('chair', 'table'))
    assert error.value.offset == len(raw) - 3
    corrupt = bytearray(raw)
    header = pgov.formats.PSEUDO_HEADER.size
    corrupt[header + 9:header + 13] = (7).to_bytes(4, 'little')
    path.write_bytes(bytes(corrupt))
    with pytest.raises(pgov.errors.DataFormatError) as error:
        pgov.formats.read_pseudo_labels(str(path), ('chair', 'table'))
    assert error.value.offset == header + 9


def test_loss_log(tmp_path):
    log = [pgov.trainer.LossRow(0, 0, 0.5, 0.1, 0.52),
           pgov.trainer.LossRow(1, 1, 1 / 3, 0.0, 1 / 3)]
    path = str(tmp_path / 'losses.csv')
    pgov.formats.write_loss_log(path, log)
    assert (tmp_path / 'losses.csv').read_text().splitlines()[0] \
        == 'epoch,step,alignment,consistency,total'
    assert pgov.formats.read_loss_log(path) == log


def test_eval_report_rows():
    report = pgov.metrics.attach_split(pgov.metrics.compute_metrics(
        pgov.metrics.build_confusion([0, 1, 1], [0, 0, 1], 3)), [0], [1, 2])
    rows = pgov.formats.eval_report_rows(report, ['chair', 'table', 'sofa'],
                                         {'matched_pair_cosine': 0.5})
    values = {(metric, name): value for metric, name, value in rows}
    assert values[('miou', 'all')] == repr(0.5)
    assert values[('miou_pct', 'all')] == repr(50.0)
    assert values[('iou', 'chair')] == repr(0.5)
    assert ('iou', 'sofa') not in values
    assert values[('unmatched', 'sofa')] == '0'
    assert values[('hiou', 'all')] == repr(0.5)
    assert values[('matched_pair_cosine', 'all')] == repr(0.5)


def test_read_csv_checks_header(tmp_path):
    path = tmp_path / 'ablation.csv'
    path.write_text('preset,seed,miou\nfull,0,0.5\n')
    with pytest.raises(pgov.errors.DataFormatError):
        pgov.formats.read_ablation_table(str(path))
    pgov.formats.write_ablation_table(str(path), [('full', 0, 0.5, 0.75)])
    assert pgov.formats.read_ablation_table(str(path)) == [
        ('full', 0, 0.5, 0.75)]
