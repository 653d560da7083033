#!/usr/bin/env python3
# -*- coding: utf-8 -*-
import logging
import pytest
import pgov.configuration
import pgov.errors
import pgov.helper
import pgov.settings
import pgov.validation


def _configure(cli_args, **kwargs):
    return pgov.configuration.get_configuration(cli_args, **kwargs)


def test_defaults_validate():
    config = _configure({}, validate_settings=True)
    assert config.preset == 'full_curriculum'
    assert config.train.seed is None
    assert config.scene.room_extent == (5.0, 4.0, 2.6)


def test_unknown_key(write_config):
    path = write_config({'train': {'learning_rte': 0.1}})
    with pytest.raises(pgov.errors.ConfigError) as error:
        _configure(dict(config=path))
    assert error.value.key == 'train.learning_rte'
    path = write_config({'colour': 'red'}, name='other.json')
    with pytest.raises(pgov.errors.ConfigError) as error:
        _configure(dict(config=path))
    assert error.value.key == 'colour'


def test_section_must_be_object(write_config):
    with pytest.raises(pgov.errors.ConfigError) as error:
        _configure(dict(config=write_config({'train': 3})))
    assert error.value.key == 'train'


def test_negative_learning_rate(write_config):
    path = write_config({'train': {'learning_rate': -0.01}})
    config = _configure(dict(config=path))
    with pytest.raises(pgov.errors.ConfigError) as error:
        _configure(dict(config=path), validate_settings=True)
    assert error.value.key == 'train.learning_rate'
    assert 'is: -0.01' in str(error.value)
    assert config.train.learning_rate == -0.01


def test_all_failures_are_listed(write_config):
    path = write_config({'pseudo': {'repetitions': 0},
                         'camera': {'cx': 99.0}})
    with pytest.raises(pgov.errors.ConfigError) as error:
        _configure(dict(config=path), validate_settings=True)
    message = str(error.value)
    assert message.startswith('Errors:')
    assert ' 1/2: camera.cx:' in message
    assert ' 2/2: pseudo.repetitions:' in message
    assert error.value.key == 'camera.cx'


def test_wrong_value_type_fails_validation(write_config):
    path = write_config({'scene': {'n_train_scenes': 'two'}})
    with pytest.raises(pgov.errors.ConfigError) as error:
        _configure(dict(config=path), validate_settings=True)
    assert error.value.key == 'scene.n_train_scenes'


@pytest.mark.parametrize('overrides, key', [
    ({'scene': {'categories': ['chair', 'spaceship']}}, 'scene.categories'),
    ({'eval': {'split': 'B15/N4'}}, 'eval.split'),
    ({'oracle': {'base_supervision': True}}, 'eval.split'),
    ({'eval': {'base_ids': [0]}}, 'eval.base_ids'),
    ({'eval': {'synonyms': {'couch': 'divan'}}}, 'eval.synonyms'),
    ({'ablation': {'presets': ['full_curriculum', 'fast']}},
     'ablation.presets'),
])
def test_invalid_settings(write_config, overrides, key):
    with pytest.raises(pgov.errors.ConfigError) as error:
        _configure(dict(config=write_config(overrides)),
                   validate_settings=True)
    assert error.value.key == key


def test_missing_and_broken_files(tmp_path):
    with pytest.raises(pgov.errors.ConfigError):
        _configure(dict(config=str(tmp_path / 'absent.json')))
    broken = tmp_path / 'broken.json'
    broken.write_text('{"seed": ')
    with pytest.raises(pgov.errors.ConfigError):
        _configure(dict(config=str(broken)))
    broken.write_text('[1, 2]')
    with pytest.raises(pgov.errors.ConfigError):
        _configure(dict(config=str(broken)))


def test_cli_overrides(write_config):
    config = _configure(dict(config=write_config({'seed': 3}), out=' run ',
                             seed=11, preset='stage1_only', quiet=True))
    assert config.seed == 11
    assert config.output_dir == 'run'
    assert config.preset == 'stage1_only'
    assert config.log_level == logging.WARNING
    config = _configure(dict(log_file='x.log', debug=True))
    assert config.log_to_file and config.log_file == 'x.log'
    assert config.log_level == logging.DEBUG


@pytest.mark.parametrize('preset, key, value', [
    ('full_curriculum', 'finetune', True),
    ('stage1_only', 'finetune', False),
    ('no_consistency', 'lambda_consistency', 0.0),
    ('no_pretrained_weights', 'load_pretrained', False),
])
def test_resolve_applies_presets(preset, key, value):
    config = pgov.configuration.resolve(_configure(dict(preset=preset,
                                                        seed=4)))
    assert getattr(config.train, key) == value
    assert config.train.seed == pgov.helper.derive_seed(4, 'train')
    assert config.pseudo.seed == pgov.helper.derive_seed(4, 'pseudo')


def test_resolve_is_idempotent():
    config = pgov.configuration.resolve(_configure(dict(
        preset='no_consistency')))
    assert pgov.configuration.resolve(config) == config
    with pytest.raises(pgov.errors.ConfigError) as error:
        pgov.configuration.resolve(
            pgov.configuration.build_config(dict(
                pgov.configuration.read_config(None), preset='fast')))
    assert error.value.key == 'preset'


def test_explicit_section_seed_is_kept(write_config):
    config = pgov.configuration.resolve(_configure(dict(
        config=write_config({'train': {'seed': 99}}))))
    assert config.train.seed == 99


def test_dumped_config_reads_back(tmp_path, write_config):
    config = pgov.configuration.resolve(_configure(dict(
        config=write_config({'eval': {'base_ids': [0, 1],
                                      'novel_ids': [2]}}),
        preset='stage1_only', seed=5)))
    dumped = pgov.configuration.dump_config(config)
    path = tmp_path / 'dumped.json'
    path.write_text(dumped, encoding='utf-8')
    again = pgov.configuration.resolve(_configure(dict(config=str(path)),
                                                  validate_settings=True))
    assert again == config
    assert pgov.configuration.dump_config(again) == dumped
    assert pgov.validation.split_of(again) == ((0, 1), (2,))


def test_reuse_run_config(tmp_path, write_config):
    out = tmp_path / 'run'
    out.mkdir()
    (out / pgov.settings.CONFIG_FILE_NAME).write_text('{"seed": 42}')
    reused = _configure(dict(out=str(out)), reuse_run_config=True)
    assert reused.seed == 42
    fresh = _configure(dict(out=str(out)))
    assert fresh.seed == 0
    explicit = _configure(dict(out=str(out), config=write_config()),
                          reuse_run_config=True)
    assert explicit.seed == 0
