#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""Defines validation checks.

Checks for the following are defined:
    checking command line arguments (CLI_CHECKS)
    checking fully assembled settings (SETTINGS_CHECKS)

"""
import pgov.errors
import pgov.scene_synth
import pgov.settings

# CLI_CHECKS


def _get_cli_checks() -> list:
    """
    Returns validation checks for checking command line arguments.

    For now, only this is checked:
        * are both cli_args['quiet'] and cli_args['debug'] set?
        * are both cli_args['log_file'] and cli_args['log_to_stdout']
        set?
        * is cli_args['preset'] a known preset?
        * is cli_args['seed'] negative?

    Returns:
        A lists of list, where the second list has two
        kind of items:
            * callable: function to call (full cli_args as parameter)
            * str: helpmsg (formattable with keyword expaned cli_args)

    """
    def no_quiet_and_debug(cli_args: dict) -> bool:
        ''' Returns True if both quiet and debug are set to True'''
        return bool(cli_args['quiet'] and cli_args['debug'])

    def ambigious_log_dest(cli_args: dict) -> bool:
        ''' Returns True if log_file is set and log_to_stdout is True'''
        return cli_args['log_file'] is not None and cli_args['log_to_stdout']

    def unknown_preset(cli_args: dict) -> bool:
        ''' Returns True if the preset is not defined'''
        return cli_args['preset'] is not None \
            and cli_args['preset'] not in pgov.settings.PRESETS

    def negative_seed(cli_args: dict) -> bool:
        ''' Returns True if the seed is negative'''
        return cli_args['seed'] is not None and cli_args['seed'] < 0

    # invalid messsages
    # use {key} for cli_args[key]

    no_quiet_and_debug_msg = ('You set "-q, --quiet" and "-b, '
                              '--debug". Please choose one.')
    ambigious_log_dest_msg = ('You set "-l, --log_file" and "-s, '
                              '--log_to_stdout". This is not supported.'
                              ' Please choose one.')
    unknown_preset_msg = ('Unknown preset "{preset}". Known: '
                          + ', '.join(pgov.settings.PRESETS) + '.')
    negative_seed_msg = 'Seed must not be negative, is: {seed}.'

    cli_checks = [
        [no_quiet_and_debug, no_quiet_and_debug_msg],
        [ambigious_log_dest, ambigious_log_dest_msg],
        [unknown_preset, unknown_preset_msg],
        [negative_seed, negative_seed_msg]
    ]
    return cli_checks


CLI_CHECKS = _get_cli_checks()

# SETTINGS_CHECKS


def _probability(value) -> bool:
    return not 0.0 <= value <= 1.0


def _fraction(value) -> bool:
    return not 0.0 < value <= 1.0


def _get_settings_check() -> list:
    """
    Returns validation checks for checking a PipelineConfig instance.

    Every check names the dotted key it guards, so a failure can be
    reported as a ConfigError carrying that key. A check that raises
    TypeError or ValueError (e.g. a string where a number belongs)
    counts as failed.

    Returns:
        A lists of list, where the second list has three
        kind of items:
            * callable: function to call (called w/ PipelineConfig
            instance as parameter), True if invalid
            * str: dotted key of the setting
            * str: invalidmsg (formattable with access to PipelineConfig
            instance as `settings`)

    """
    def bad_split(settings) -> bool:
        ''' Returns True if the base/novel split does not resolve'''
        split = split_of(settings)
        if split is None:
            return settings.oracle.base_supervision
        try:
            pgov.scene_synth.split_base_novel(settings.scene.categories,
                                              split)
        except pgov.errors.BadSplitError:
            return True
        return False

    def one_sided_ids(settings) -> bool:
        ''' Returns True if only one of base_ids / novel_ids is set'''
        return (settings.eval.base_ids is None) \
            != (settings.eval.novel_ids is None)

    def unknown_category(settings) -> bool:
        ''' Returns True if a category is not in the scene catalog'''
        return any(name not in pgov.scene_synth.CATEGORY_CATALOG
                   for name in settings.scene.categories)

    scene, camera = 'scene.', 'camera.'
    oracle, train, pseudo = 'oracle.', 'train.', 'pseudo.'
    settings_checks = [
        [lambda s: s.seed < 0, 'seed', 'seed must not be negative, is: '
         '{settings.seed}'],
        [lambda s: s.log_level not in (10, 20, 30, 40, 50), 'log_level',
         'log_level must be one of 10, 20, 30, 40, 50'],
        [lambda s: s.preset not in pgov.settings.PRESETS, 'preset',
         'unknown preset "{settings.preset}"'],
        [lambda s: len(s.scene.room_extent) != 3
         or min(s.scene.room_extent) <= 0, scene + 'room_extent',
         'room_extent needs 3 positive values, is: '
         '{settings.scene.room_extent}'],
        [lambda s: s.scene.n_train_scenes < 1, scene + 'n_train_scenes',
         'n_train_scenes must be at least 1'],
        [lambda s: s.scene.n_heldout_scenes < 1,
         scene + 'n_heldout_scenes', 'n_heldout_scenes must be at least 1'],
        [lambda s: s.scene.objects_per_scene < 0,
         scene + 'objects_per_scene', 'objects_per_scene must not be '
         'negative'],
        [lambda s: not s.scene.surface_density > 0,
         scene + 'surface_density', 'surface_density must be positive'],
        [lambda s: s.scene.color_jitter < 0, scene + 'color_jitter',
         'color_jitter must not be negative'],
        [lambda s: len(set(s.scene.categories)) != len(s.scene.categories)
         or len(s.scene.categories) == 0, scene + 'categories',
         'categories must be unique and non-empty'],
        [unknown_category, scene + 'categories',
         'categories must be taken from: '
         + ', '.join(pgov.scene_synth.CATEGORY_CATALOG)],
        [lambda s: s.camera.width < 1 or s.camera.height < 1,
         camera + 'width', 'width and height must be positive'],
        [lambda s: not (s.camera.fx > 0 and s.camera.fy > 0),
         camera + 'fx', 'fx and fy must be positive'],
        [lambda s: not (0 <= s.camera.cx < s.camera.width
                        and 0 <= s.camera.cy < s.camera.height),
         camera + 'cx', 'principal point ({settings.camera.cx}, '
         '{settings.camera.cy}) must lie inside the image'],
        [lambda s: s.camera.n_frames < 1, camera + 'n_frames',
         'n_frames must be at least 1'],
        [lambda s: s.camera.frame_stride < 1, camera + 'frame_stride',
         'frame_stride must be at least 1'],
        [lambda s: _fraction(s.camera.orbit_radius_fraction),
         camera + 'orbit_radius_fraction', 'orbit_radius_fraction must be '
         'in (0, 1]'],
        [lambda s: _fraction(s.camera.eye_height_fraction)
         or _fraction(s.camera.target_height_fraction),
         camera + 'eye_height_fraction', 'height fractions must be in '
         '(0, 1]'],
        [lambda s: s.camera.jitter < 0, camera + 'jitter',
         'jitter must not be negative'],
        [lambda s: s.camera.point_radius_px < 1, camera + 'point_radius_px',
         'point_radius_px must be at least 1'],
        [lambda s: s.camera.view_color_noise < 0,
         camera + 'view_color_noise', 'view_color_noise must not be '
         'negative'],
        [lambda s: _probability(s.oracle.category_dropout_prob),
         oracle + 'category_dropout_prob', 'category_dropout_prob must be '
         'in [0, 1]'],
        [lambda s: _probability(s.oracle.pixel_mislabel_prob),
         oracle + 'pixel_mislabel_prob', 'pixel_mislabel_prob must be in '
         '[0, 1]'],
        [lambda s: s.oracle.boundary_erosion_px < 0,
         oracle + 'boundary_erosion_px', 'boundary_erosion_px must not be '
         'negative'],
        [lambda s: len(s.encoder.hidden_sizes) == 0
         or min(s.encoder.hidden_sizes) < 1, 'encoder.hidden_sizes',
         'hidden_sizes needs at least one positive layer size'],
        [lambda s: s.encoder.embedding_dim < 2, 'encoder.embedding_dim',
         'embedding_dim must be at least 2'],
        [lambda s: s.train.lambda_consistency < 0,
         train + 'lambda_consistency', 'lambda_consistency must not be '
         'negative'],
        [lambda s: not s.train.learning_rate > 0, train + 'learning_rate',
         'learning_rate must be positive, is: '
         '{settings.train.learning_rate}'],
        [lambda s: s.train.weight_decay < 0, train + 'weight_decay',
         'weight_decay must not be negative'],
        [lambda s: not (0 <= s.train.adam_beta1 < 1
                        and 0 <= s.train.adam_beta2 < 1),
         train + 'adam_beta1', 'adam betas must be in [0, 1)'],
        [lambda s: not s.train.adam_eps > 0, train + 'adam_eps',
         'adam_eps must be positive'],
        [lambda s: s.train.batch_size_stage1 < 1
         or s.train.batch_size_stage2 < 1, train + 'batch_size_stage1',
         'batch sizes must be at least 1'],
        [lambda s: s.train.epochs_stage1 < 0 or s.train.epochs_stage2 < 0,
         train + 'epochs_stage1', 'epochs must not be negative'],
        [lambda s: s.train.stage2_points_per_scene < 1,
         train + 'stage2_points_per_scene', 'stage2_points_per_scene must '
         'be at least 1'],
        [lambda s: not s.train.match_radius > 0, train + 'match_radius',
         'match_radius must be positive'],
        [lambda s: s.train.seed is not None and s.train.seed < 0,
         train + 'seed', 'seed must not be negative'],
        [lambda s: not s.pseudo.voxel_size > 0, pseudo + 'voxel_size',
         'voxel_size must be positive'],
        [lambda s: s.pseudo.repetitions < 1, pseudo + 'repetitions',
         'repetitions must be at least 1'],
        [lambda s: not s.pseudo.temperature > 0, pseudo + 'temperature',
         'temperature must be positive'],
        [lambda s: _probability(s.pseudo.confidence_threshold),
         pseudo + 'confidence_threshold', 'confidence_threshold must be '
         'in [0, 1]'],
        [lambda s: s.pseudo.context_radius < 0, pseudo + 'context_radius',
         'context_radius must not be negative'],
        [lambda s: s.pseudo.seed is not None and s.pseudo.seed < 0,
         pseudo + 'seed', 'seed must not be negative'],
        [one_sided_ids, 'eval.base_ids', 'base_ids and novel_ids must be '
         'set together'],
        [bad_split, 'eval.split', 'split does not partition '
         'scene.categories (base_supervision needs a split)'],
        [lambda s: any(not isinstance(k, str) or v not in s.scene.categories
                       for k, v in s.eval.synonyms.items()),
         'eval.synonyms', 'synonyms must map strings to scene categories'],
        [lambda s: len(s.ablation.seeds) == 0, 'ablation.seeds',
         'ablation needs at least one seed'],
        [lambda s: any(seed < 0 for seed in s.ablation.seeds),
         'ablation.seeds', 'ablation seeds must not be negative'],
        [lambda s: any(p not in pgov.settings.PRESETS
                       for p in s.ablation.presets), 'ablation.presets',
         'unknown preset in ablation.presets'],
    ]
    return settings_checks


def split_of(settings):
    """The configured split: explicit id lists win over a split name."""
    if settings.eval.base_ids is not None \
            and settings.eval.novel_ids is not None:
        return (settings.eval.base_ids, settings.eval.novel_ids)
    return settings.eval.split


SETTINGS_CHECKS = _get_settings_check()
