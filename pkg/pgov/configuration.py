#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""Gets basic configuration: populates the settings tree with default
values, merges the JSON config file and the command line on top of it.

Basic setup:
    tree = read_config(path)
    config = get_configuration(cli_args, setup_logger=True,
                               validate_settings=True)
    run_config = resolve(config)

Other functions:
    dump_config(config)
    load_run_config(out_dir)

A PipelineConfig returned by get_configuration still names its preset
without applying it and may leave section seeds unset; resolve() fills
both in. Resolving twice gives the same result.

"""
import copy
import dataclasses
import logging
import os
import sys
import typing
import pgov.errors
import pgov.formats
import pgov.helper
import pgov.settings
import pgov.validation


def _merge(tree: dict, overrides: dict, prefix: str = '') -> None:
    """Merge `overrides` into `tree` in place.

    Raises:
        ConfigError: If a key is unknown or a section is not an object.

    """
    for key, value in overrides.items():
        dotted = f'{prefix}{key}'
        if key not in tree:
            raise pgov.errors.ConfigError(f'unknown config key "{dotted}"',
                                          dotted)
        if not prefix and key in pgov.settings.SECTIONS:
            if not isinstance(value, dict):
                raise pgov.errors.ConfigError(
                    f'config section "{dotted}" must be an object', dotted)
            _merge(tree[key], value, prefix=f'{dotted}.')
        else:
            tree[key] = value


def _apply_dotted(tree: dict, overrides: typing.Mapping[str, typing.Any]
                  ) -> None:
    for dotted, value in overrides.items():
        *sections, key = dotted.split('.')
        nested = {key: value}
        for section in reversed(sections):
            nested = {section: nested}
        _merge(tree, nested)


def read_config(path: typing.Optional[str]) -> dict:
    """Read a JSON config file on top of the defaults.

    Args:
        path: JSON file; None returns the defaults

    Returns:
        Settings tree (see pgov.settings.SETTINGS_DEFAULTS)

    Raises:
        ConfigError: If the file is missing, unparsable or has unknown
        keys.

    """
    tree = copy.deepcopy(pgov.settings.SETTINGS_DEFAULTS)
    if path is None:
        return tree
    try:
        overrides = pgov.formats.read_json(path)
    except pgov.errors.MissingArtifactsError as error:
        raise pgov.errors.ConfigError(f'config file not found: {path}'
                                      ) from error
    except pgov.errors.DataFormatError as error:
        raise pgov.errors.ConfigError(f'unreadable config: {error}'
                                      ) from error
    if not isinstance(overrides, dict):
        raise pgov.errors.ConfigError(f'{path}: config must be a JSON '
                                      'object')
    _merge(tree, overrides)
    return tree


def _freeze(value: typing.Any) -> typing.Any:
    if isinstance(value, list):
        return tuple(_freeze(item) for item in value)
    return value


def build_config(tree: dict) -> pgov.settings.PipelineConfig:
    """Assemble the frozen dataclasses of a settings tree."""
    values = {}
    for key, value in tree.items():
        section = pgov.settings.SECTIONS.get(key)
        if section is None:
            values[key] = _freeze(value)
        else:
            values[key] = section(**{name: _freeze(item)
                                     for name, item in value.items()})
    return pgov.settings.PipelineConfig(**values)


def resolve(config: pgov.settings.PipelineConfig
            ) -> pgov.settings.PipelineConfig:
    """Apply the preset and derive unset section seeds.

    Raises:
        ConfigError: If the preset is unknown.

    """
    if config.preset not in pgov.settings.PRESETS:
        raise pgov.errors.ConfigError(f'unknown preset "{config.preset}"',
                                      'preset')
    changes: typing.Dict[str, dict] = {}
    for dotted, value in pgov.settings.PRESETS[config.preset].items():
        section, key = dotted.split('.')
        changes.setdefault(section, {})[key] = value
    for section in ('train', 'pseudo'):
        if getattr(config, section).seed is None:
            changes.setdefault(section, {})['seed'] = \
                pgov.helper.derive_seed(config.seed, section)
    sections = {name: dataclasses.replace(getattr(config, name), **values)
                for name, values in changes.items()}
    return dataclasses.replace(config, **sections)


def dump_config(config: pgov.settings.PipelineConfig) -> str:
    """Canonical JSON of a config; read_config accepts it back."""
    return pgov.formats.dump_json(dataclasses.asdict(config))


def load_run_config(out_dir: str) -> typing.Optional[str]:
    """Path of the config.json of a run directory, None if absent."""
    path = os.path.join(out_dir, pgov.settings.CONFIG_FILE_NAME)
    return path if os.path.isfile(path) else None


def _validate(settings: pgov.settings.PipelineConfig) -> None:
    """Validates settings.

    Validation is specified by pgov.validation.SETTINGS_CHECKS. A check
    that cannot be evaluated (wrong value type) counts as failed.

    Args:
        settings: full settings

    Raises:
        ConfigError: If invalid settings are found; `key` names the
        first offending setting, the message lists all of them.

    """
    invalid = list()

    for call_check, key, invalid_msg in pgov.validation.SETTINGS_CHECKS:
        try:
            failed = call_check(settings)
        except (TypeError, ValueError, AttributeError) as error:
            logging.debug('Check of %s raised: %s', key, error)
            failed = True
        if failed:
            try:
                invalid_msg = invalid_msg.format(settings=settings)
            except (AttributeError, ValueError):
                pass
            invalid.append((key, f'{key}: {invalid_msg}'))

    if len(invalid) > 0:
        logging.critical('Wrong configuration')
        for _, message in invalid:
            logging.critical(message)
        total = len(invalid)
        lines = [f' {number}/{total}: {message}'
                 for number, (_, message) in enumerate(invalid, 1)]
        raise pgov.errors.ConfigError('\n'.join(['Errors:'] + lines),
                                      invalid[0][0])


def get_configuration(cli_args: dict, setup_logger: bool = False,
                      validate_settings: bool = False,
                      reuse_run_config: bool = False
                      ) -> pgov.settings.PipelineConfig:
    """Get final configuration.

    Defaults, then the config file, then the command line. With
    `reuse_run_config` and no --config, the config.json of the run
    directory is read if present, so that single stages see the
    settings the run started with.

    Args:
        cli_args: Arguments passed by CLI
        setup_logger = False: If `True`, call `setup_logging()`.
        validate_settings = False: If `True`, call `_validate()` on the
        resolved settings.
        reuse_run_config = False: see above

    Returns:
        Immutable configuration used for this run (preset not applied,
        see resolve()).

    Raises:
        ConfigError: If the configuration is invalid.

    """
    path = cli_args.get('config')
    if path is None and reuse_run_config:
        out_dir = cli_args.get('out') \
            or pgov.settings.SETTINGS_DEFAULTS['output_dir']
        path = load_run_config(out_dir)
    tree = read_config(path)

    overrides = {}
    if cli_args.get('out') is not None:
        overrides['output_dir'] = cli_args['out'].strip()
    if cli_args.get('seed') is not None:
        overrides['seed'] = cli_args['seed']
    if cli_args.get('preset') is not None:
        overrides['preset'] = cli_args['preset']

    # logging
    if cli_args.get('log_to_stdout'):
        overrides['log_to_file'] = False
    if cli_args.get('log_file') is not None:
        overrides['log_file'] = cli_args['log_file'].strip()
        overrides['log_to_file'] = True
    if cli_args.get('quiet'):
        overrides['log_level'] = logging.WARNING
    if cli_args.get('debug'):
        overrides['log_level'] = logging.DEBUG
    _apply_dotted(tree, overrides)

    try:
        config = build_config(tree)
    except TypeError as error:
        raise pgov.errors.ConfigError(f'malformed config: {error}'
                                      ) from error

    if setup_logger:
        setup_logging(config)
    if validate_settings:
        _validate(resolve(config))
    return config


def setup_logging(settings: pgov.settings.PipelineConfig,
                  settings_to_log: bool = True) -> None:
    """Setup logging according to settings.

    Args:
        settings: full settings
        settings_to_log = True: If True, settings are submitted to log
        (level=debug)

    """

    logformat = ('%(asctime)s.%(msecs)03d %(levelname)s - '
                 '%(funcName)s: %(message)s')
    if settings.log_to_file:
        logging.basicConfig(filename=settings.log_file,
                            format=logformat,
                            level=settings.log_level)
    else:
        logging.basicConfig(stream=sys.stdout, format=logformat,
                            level=settings.log_level)

    logging.info('\nstarting\n')
    if settings_to_log:
        logging.debug('settings (key? value): ')
        for key, value in dataclasses.asdict(settings).items():
            logging.debug("%s? %s", key, value)
