#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""Runs the stages of an experiment and the ablation suite.

Every stage reads its inputs from the run directory (config.output_dir)
and writes its outputs there; `manifest.json` records the config hash,
the seed, the preset and the completed stages.

Usage:
    run_command('experiment', config)
    run_stage('pretrain', config)
    rows = run_ablation_suite(config)

Run directory:
    config.json, manifest.json
    scenes/<train|heldout>_<nn>/scene.pgov
    scenes/<...>/frames/frame_%06d.{depth,color,srcid,subpix,meta.json}
    scenes/<...>/frames/frame_%06d.{entmask,vocab.json}  (train only)
    scenes/<...>/pseudo_labels.bin, scene_vocab.json    (train only)
    encoder_stage{1,2}.ckpt, losses_stage{1,2}.csv
    eval_report.csv, confusion.csv, summary.txt, loss_curves.svg

"""
import concurrent.futures
import dataclasses
import hashlib
import logging
import math
import os
import typing
import numpy as np
import pgov.configuration
import pgov.embedding
import pgov.entity_oracle
import pgov.errors
import pgov.formats
import pgov.geometry
import pgov.helper
import pgov.metrics
import pgov.output
import pgov.pseudo_label
import pgov.scene_synth
import pgov.settings
import pgov.trainer
import pgov.validation

Encoder = typing.Optional[pgov.embedding.PointEncoder]


# run directory layout

def scene_names(config: pgov.settings.PipelineConfig, split: str
                ) -> typing.List[str]:
    """Directory names of the train or held-out scenes."""
    count = config.scene.n_train_scenes if split == 'train' \
        else config.scene.n_heldout_scenes
    return [f'{split}_{index:02d}' for index in range(count)]


def scene_dir(config: pgov.settings.PipelineConfig, name: str) -> str:
    return os.path.join(config.output_dir, pgov.settings.SCENES_DIR_NAME,
                        name)


def frames_dir(config: pgov.settings.PipelineConfig, name: str) -> str:
    return os.path.join(scene_dir(config, name),
                        pgov.settings.FRAMES_DIR_NAME)


def _run_path(config: pgov.settings.PipelineConfig, file_name: str) -> str:
    return os.path.join(config.output_dir, file_name)


def _checkpoint_path(config: pgov.settings.PipelineConfig,
                     stage: int) -> str:
    return _run_path(config, pgov.settings.CHECKPOINT_FILE_NAME.format(
        stage=stage))


def _loss_path(config: pgov.settings.PipelineConfig, stage: int) -> str:
    return _run_path(config, pgov.settings.LOSS_FILE_NAME.format(
        stage=stage))


def _read_scene(config: pgov.settings.PipelineConfig, name: str
                ) -> pgov.scene_synth.GlobalScene:
    return pgov.formats.read_scene(os.path.join(
        scene_dir(config, name), pgov.settings.SCENE_FILE_NAME))


def _map_frames(function: typing.Callable[[int], typing.Any],
                indices: typing.Sequence[int]) -> typing.List[typing.Any]:
    """function(index) for every frame, results in frame order."""
    with concurrent.futures.ThreadPoolExecutor(
            max_workers=pgov.helper.worker_count()) as executor:
        return list(executor.map(function, indices))


# shared model pieces

def layer_sizes(config: pgov.settings.PipelineConfig) -> typing.Tuple[
        int, ...]:
    """Encoder layer sizes: 6 inputs (xyz, rgb), hidden layers, D."""
    return (6, *config.encoder.hidden_sizes, config.encoder.embedding_dim)


def text_embeddings(config: pgov.settings.PipelineConfig
                    ) -> pgov.embedding.TextEmbeddingTable:
    """Embedding table shared by all stages of a run."""
    vocabulary = list(config.scene.categories) \
        + list(config.eval.extra_entities) + list(config.eval.synonyms)
    return pgov.embedding.embed_entities(
        vocabulary, config.encoder.embedding_dim,
        pgov.helper.derive_seed(config.seed, 'text'))


def intrinsics_of(config: pgov.settings.PipelineConfig
                  ) -> pgov.geometry.CameraIntrinsics:
    camera = config.camera
    return pgov.geometry.CameraIntrinsics(
        fx=camera.fx, fy=camera.fy, cx=camera.cx, cy=camera.cy,
        width=camera.width, height=camera.height)


def base_categories(config: pgov.settings.PipelineConfig
                    ) -> typing.List[str]:
    split = pgov.validation.split_of(config)
    if split is None:
        return []
    base, _ = pgov.scene_synth.split_base_novel(config.scene.categories,
                                                split)
    return [config.scene.categories[i] for i in base]


def _partial_clouds(config: pgov.settings.PipelineConfig, name: str,
                    labeled: bool = True
                    ) -> typing.List[pgov.geometry.PartialCloud]:
    """Partial clouds of a scene in frame order.

    Without `labeled` every point is UNLABELED (held-out scenes carry no
    entity masks).

    """
    directory = frames_dir(config, name)

    def cloud(index):
        frame = pgov.formats.read_frame(directory, index)
        if labeled:
            entities = pgov.entity_oracle.read_pixel_entities(
                directory, index, frame.intrinsics.shape)
        else:
            entities = pgov.entity_oracle.PixelEntityMap(
                np.full(frame.intrinsics.shape,
                        pgov.entity_oracle.UNLABELED, dtype=np.int64), ())
        return pgov.geometry.frame_to_partial_cloud(frame, entities)

    return _map_frames(cloud, pgov.formats.list_frames(directory))


# manifest

def config_hash(config: pgov.settings.PipelineConfig) -> str:
    text = pgov.configuration.dump_config(config)
    return hashlib.sha256(text.encode('utf-8')).hexdigest()


def _mark_done(config: pgov.settings.PipelineConfig, stage: str) -> None:
    """Record a completed stage; a changed config restarts the record."""
    path = _run_path(config, pgov.settings.MANIFEST_FILE_NAME)
    digest = config_hash(config)
    done: typing.List[str] = []
    if os.path.isfile(path):
        manifest = pgov.formats.read_json(path)
        if isinstance(manifest, dict) \
                and manifest.get('config_sha256') == digest:
            done = list(manifest.get('stages_done', []))
    if stage not in done:
        done.append(stage)
    order = list(pgov.settings.STAGES)
    done.sort(key=order.index)
    pgov.formats.write_json(path, dict(config_sha256=digest,
                                       seed=config.seed,
                                       preset=config.preset,
                                       stages_done=done))


# stages

def stage_synth(config: pgov.settings.PipelineConfig,
                encoder: Encoder = None) -> None:
    """Generate train and held-out scenes; writes config.json."""
    del encoder
    pgov.helper.atomic_write(_run_path(config,
                                       pgov.settings.CONFIG_FILE_NAME),
                             pgov.configuration.dump_config(config))
    for split in ('train', 'heldout'):
        for index, name in enumerate(scene_names(config, split)):
            spec = pgov.scene_synth.random_scene_spec(
                config.scene,
                pgov.helper.derive_seed(config.seed, 'scene', split, index))
            scene = pgov.scene_synth.generate_scene(spec)
            pgov.formats.write_scene(os.path.join(
                scene_dir(config, name), pgov.settings.SCENE_FILE_NAME),
                scene)
            logging.info('Scene %s: %s points, %s objects', name,
                         len(scene), len(spec.objects))


def _clear_frames(directory: str) -> None:
    if not os.path.isdir(directory):
        return
    for file_name in os.listdir(directory):
        if file_name.startswith('frame_'):
            os.remove(os.path.join(directory, file_name))


def stage_render(config: pgov.settings.PipelineConfig,
                 encoder: Encoder = None) -> None:
    """Render the frames of every scene along its orbit."""
    del encoder
    camera = config.camera
    intrinsics = intrinsics_of(config)
    for split in ('train', 'heldout'):
        for name in scene_names(config, split):
            scene = _read_scene(config, name)
            trajectory = pgov.scene_synth.generate_trajectory(
                scene, camera.n_frames,
                pgov.helper.derive_seed(config.seed, 'trajectory', name),
                frame_stride=camera.frame_stride,
                step_degrees=camera.step_degrees,
                radius_fraction=camera.orbit_radius_fraction,
                eye_height_fraction=camera.eye_height_fraction,
                target_height_fraction=camera.target_height_fraction,
                jitter=camera.jitter)
            directory = frames_dir(config, name)
            _clear_frames(directory)
            appearance = pgov.helper.derive_seed(config.seed, 'appearance',
                                                 name)

            def render(index, scene=scene, trajectory=trajectory,
                       directory=directory, appearance=appearance):
                frame = pgov.geometry.render_frame(
                    scene, intrinsics, trajectory.poses[index],
                    point_radius_px=camera.point_radius_px,
                    frame_index=index)
                frame = pgov.geometry.perturb_frame_colors(
                    frame, camera.view_color_noise, appearance)
                pgov.formats.write_frame(directory, frame)
                return int(np.count_nonzero(frame.valid))

            covered = _map_frames(render, range(len(trajectory)))
            empty = [index for index, count in enumerate(covered)
                     if count == 0]
            if empty:
                logging.warning('Scene %s: frames without points: %s', name,
                                empty)
            logging.info('Scene %s: rendered %s frames', name, len(covered))


def stage_oracle(config: pgov.settings.PipelineConfig,
                 encoder: Encoder = None) -> None:
    """Write entity masks and vocabularies of the train frames.

    With oracle.external_masks_dir set, masks are read from
    `<external_masks_dir>/<scene>/frame_%06d.entmask` (plus
    `.vocab.json`) instead of being produced by the oracle.

    """
    del encoder
    base = base_categories(config) if config.oracle.base_supervision \
        else []
    external = config.oracle.external_masks_dir
    for name in scene_names(config, 'train'):
        scene = _read_scene(config, name)
        directory = frames_dir(config, name)
        noise = pgov.entity_oracle.NoiseConfig.from_settings(
            config.oracle, pgov.helper.derive_seed(config.seed, 'oracle',
                                                   name))

        def label(index, name=name, scene=scene, directory=directory,
                  noise=noise):
            frame = pgov.formats.read_frame(directory, index)
            if external is not None:
                source = os.path.join(external, name)
                pixel_map = pgov.entity_oracle.ingest_external_masks(
                    pgov.formats.frame_path(
                        source, index, pgov.entity_oracle.MASK_SUFFIX),
                    pgov.formats.frame_path(
                        source, index, pgov.entity_oracle.VOCAB_SUFFIX),
                    frame.intrinsics.shape)
            else:
                pixel_map = pgov.entity_oracle.oracle_pixel_entities(
                    frame, scene, noise)
            if base:
                pixel_map = pgov.entity_oracle.apply_base_supervision(
                    pixel_map, frame, scene, base)
            pgov.entity_oracle.write_pixel_entities(pixel_map, directory,
                                                    index)
            return pixel_map.labeled_count

        labeled = _map_frames(label, pgov.formats.list_frames(directory))
        logging.info('Scene %s: %s labeled pixels in %s frames', name,
                     sum(labeled), len(labeled))


def stage_pretrain(config: pgov.settings.PipelineConfig,
                   encoder: Encoder = None) -> None:
    """Stage 1 on the partial clouds of the train scenes."""
    scene_clouds = [_partial_clouds(config, name)
                    for name in scene_names(config, 'train')]
    params = pgov.embedding.init_encoder(
        layer_sizes(config), pgov.helper.derive_seed(config.train.seed,
                                                     'init'))
    params, log = pgov.trainer.pretrain_stage(
        scene_clouds, text_embeddings(config), params, config.train,
        room_extent=config.scene.room_extent,
        encoder=encoder or pgov.embedding.MLP_ENCODER)
    pgov.formats.write_checkpoint(_checkpoint_path(config, 1), params)
    pgov.formats.write_loss_log(_loss_path(config, 1), log)


def stage_pseudolabel(config: pgov.settings.PipelineConfig,
                      encoder: Encoder = None) -> None:
    """Pseudo labels of the train scenes from the stage-1 encoder."""
    params = pgov.formats.read_checkpoint(_checkpoint_path(config, 1))
    embeddings = text_embeddings(config)
    for name in scene_names(config, 'train'):
        scene = _read_scene(config, name)
        directory = frames_dir(config, name)
        indices = pgov.formats.list_frames(directory)
        vocabularies = [pgov.formats.read_vocabulary(pgov.formats.frame_path(
            directory, index, pgov.entity_oracle.VOCAB_SUFFIX))
            for index in indices]
        scene_vocab = pgov.pseudo_label.aggregate_vocabulary(vocabularies,
                                                             indices)
        labels = pgov.pseudo_label.generate_pseudo_labels(
            scene, params, scene_vocab, embeddings, config.pseudo,
            room_extent=config.scene.room_extent,
            encoder=encoder or pgov.embedding.MLP_ENCODER)
        pgov.formats.write_json(os.path.join(
            scene_dir(config, name), pgov.settings.SCENE_VOCAB_FILE_NAME),
            dict(entities=list(scene_vocab.entities),
                 provenance={entity: list(frames) for entity, frames
                             in scene_vocab.provenance.items()}))
        pgov.formats.write_pseudo_labels(os.path.join(
            scene_dir(config, name), pgov.settings.PSEUDO_LABEL_FILE_NAME),
            labels)


def _read_scene_vocab(config: pgov.settings.PipelineConfig,
                      name: str) -> typing.Tuple[str, ...]:
    path = os.path.join(scene_dir(config, name),
                        pgov.settings.SCENE_VOCAB_FILE_NAME)
    data = pgov.formats.read_json(path)
    entities = data.get('entities') if isinstance(data, dict) else None
    if not isinstance(entities, list) \
            or not all(isinstance(entity, str) for entity in entities):
        raise pgov.errors.DataFormatError('expected "entities": [strings]',
                                          path, 0)
    return tuple(entities)


def stage_finetune(config: pgov.settings.PipelineConfig,
                   encoder: Encoder = None) -> None:
    """Stage 2 on the pseudo-labeled train scenes.

    Skipped when train.finetune is false; evaluation then uses the
    stage-1 encoder.

    """
    if not config.train.finetune:
        logging.info('Stage 2 disabled (train.finetune = false)')
        return
    params = pgov.formats.read_checkpoint(_checkpoint_path(config, 1))
    inputs, labels = [], []
    for name in scene_names(config, 'train'):
        scene = _read_scene(config, name)
        inputs.append(pgov.scene_synth.scene_inputs(
            scene.positions, scene.colors, config.scene.room_extent))
        labels.append(pgov.formats.read_pseudo_labels(
            os.path.join(scene_dir(config, name),
                         pgov.settings.PSEUDO_LABEL_FILE_NAME),
            _read_scene_vocab(config, name)))
    params, log = pgov.trainer.finetune_stage(
        inputs, labels, text_embeddings(config), params, config.train,
        encoder=encoder or pgov.embedding.MLP_ENCODER)
    pgov.formats.write_checkpoint(_checkpoint_path(config, 2), params)
    pgov.formats.write_loss_log(_loss_path(config, 2), log)


def eval_vocabulary(config: pgov.settings.PipelineConfig
                    ) -> typing.List[str]:
    """Categories plus extra open entities, without duplicates."""
    return list(dict.fromkeys(list(config.scene.categories)
                              + list(config.eval.extra_entities)))


def stage_eval(config: pgov.settings.PipelineConfig,
               encoder: Encoder = None) -> pgov.metrics.EvalReport:
    """Segment the held-out scenes and score them.

    Returns:
        Evaluation report (also written to eval_report.csv)

    """
    encoder = encoder or pgov.embedding.MLP_ENCODER
    stage = 2 if config.train.finetune else 1
    params = pgov.formats.read_checkpoint(_checkpoint_path(config, stage))
    embeddings = text_embeddings(config)
    categories = list(config.scene.categories)
    vocabulary = eval_vocabulary(config)
    n_classes = len(categories)
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    unmatched = np.zeros(n_classes, dtype=np.int64)
    heldout_clouds = []
    for name in scene_names(config, 'heldout'):
        scene = _read_scene(config, name)
        predicted = pgov.metrics.segment_scene(
            params, scene, vocabulary, embeddings,
            room_extent=config.scene.room_extent, encoder=encoder)
        labels = pgov.metrics.remap_vocab(
            [vocabulary[i] for i in predicted.tolist()], categories,
            config.eval.synonyms)
        lookup = np.array([categories.index(c) if c in categories
                           else pgov.metrics.IGNORE_ID
                           for c in scene.categories] + [
                               pgov.metrics.IGNORE_ID], dtype=np.int64)
        gt = lookup[scene.gt_labels]  # -1 reads the trailing IGNORE slot
        matrix = pgov.metrics.build_confusion(labels, gt, n_classes)
        counts += matrix.counts
        unmatched += matrix.unmatched
        if matrix.unmatched.sum():
            logging.warning('Scene %s: %s predictions match no category',
                            name, int(matrix.unmatched.sum()))
        heldout_clouds.append(_partial_clouds(config, name, labeled=False))

    report = pgov.metrics.compute_metrics(
        pgov.metrics.ConfusionMatrix(counts, unmatched))
    split = pgov.validation.split_of(config)
    if split is not None:
        base, novel = pgov.scene_synth.split_base_novel(categories, split)
        report = pgov.metrics.attach_split(report, base, novel)
    cosine = pgov.trainer.matched_pair_cosine(
        params, heldout_clouds, room_extent=config.scene.room_extent,
        match_radius=config.train.match_radius, encoder=encoder)
    rows = pgov.formats.eval_report_rows(
        report, categories, extra=dict(matched_pair_cosine=cosine))
    pgov.formats.write_eval_report(
        _run_path(config, pgov.settings.EVAL_REPORT_FILE_NAME), rows)
    pgov.formats.write_confusion(
        _run_path(config, pgov.settings.CONFUSION_FILE_NAME), counts,
        categories)
    logging.info('Eval: mIoU %.4f, mAcc %.4f, matched-pair cosine %.4f',
                 report.miou, report.macc, cosine)
    return report


STAGE_FUNCTIONS = dict(synth=stage_synth, render=stage_render,
                       oracle=stage_oracle, pretrain=stage_pretrain,
                       pseudolabel=stage_pseudolabel,
                       finetune=stage_finetune, eval=stage_eval)


def run_stage(name: str, config: pgov.settings.PipelineConfig,
              encoder: Encoder = None) -> typing.Any:
    """Run one stage on the resolved config and record it.

    Raises:
        KeyError: If `name` is not a stage.

    """
    config = pgov.configuration.resolve(config)
    logging.info('Stage %s: start (%s)', name, config.output_dir)
    result = STAGE_FUNCTIONS[name](config, encoder)
    _mark_done(config, name)
    logging.info('Stage %s: done', name)
    return result


def run_experiment(config: pgov.settings.PipelineConfig,
                   encoder: Encoder = None) -> pgov.metrics.EvalReport:
    """Run every stage in order, then write the report.

    Args:
        config: settings; the preset is applied here
        encoder = None: point encoder for all stages (default MLP)

    Returns:
        Evaluation report of the held-out scenes

    """
    config = pgov.configuration.resolve(config)
    logging.info('Experiment %s (seed %s) in %s', config.preset,
                 config.seed, config.output_dir)
    report = None
    for name in pgov.settings.STAGES:
        report = run_stage(name, config, encoder)
    pgov.output.emit_report(config.output_dir)
    return report


def run_ablation_suite(config: pgov.settings.PipelineConfig,
                       encoder: Encoder = None) -> typing.List[tuple]:
    """Run every ablation preset for every ablation seed.

    Runs go to `<output_dir>/ablation/<preset>/seed_<n>`; the table is
    written to ablation.csv and the chart to ablation.svg.

    Args:
        config: base settings (before any preset)
        encoder = None: point encoder for all runs

    Returns:
        Rows (preset, seed, mIoU, mAcc)

    """
    rows = []
    for preset in config.ablation.presets:
        for seed in config.ablation.seeds:
            run_dir = os.path.join(config.output_dir,
                                   pgov.settings.ABLATION_DIR_NAME, preset,
                                   f'seed_{seed}')
            report = run_experiment(dataclasses.replace(
                config, preset=preset, seed=seed, output_dir=run_dir),
                encoder)
            rows.append((preset, seed, report.miou, report.macc))
    pgov.formats.write_ablation_table(
        _run_path(config, pgov.settings.ABLATION_TABLE_FILE_NAME), rows)
    pgov.helper.atomic_write(
        _run_path(config, pgov.settings.ABLATION_PLOT_FILE_NAME),
        pgov.output.render_ablation_chart(rows))
    for preset in config.ablation.presets:
        values = [miou for name, _, miou, _ in rows if name == preset]
        logging.info('Ablation %s: mean mIoU %.4f over %s seeds', preset,
                     math.fsum(values) / len(values), len(values))
    return rows


def run_command(command: str, config: pgov.settings.PipelineConfig,
                encoder: Encoder = None) -> typing.Optional[str]:
    """Dispatch a subcommand.

    Returns:
        The summary text for `report`, None otherwise

    """
    if command == 'experiment':
        run_experiment(config, encoder)
    elif command == 'ablation':
        run_ablation_suite(config, encoder)
    elif command == 'report':
        return pgov.output.emit_report(config.output_dir)
    else:
        run_stage(command, config, encoder)
    return None
