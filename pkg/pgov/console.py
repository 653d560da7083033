#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""Defines console script entry point.

See README for usage examples."""
import logging
import sys
import typing
import pgov.cli as cli
import pgov.configuration as cfg
import pgov.embedding
import pgov.errors
import pgov.helper
import pgov.pipeline as pipeline

# subcommands that start a fresh run and ignore the run's config.json
_FRESH_RUNS = ('experiment', 'ablation')


def run_subcommand(argv: typing.Sequence[str],
                   encoder: typing.Optional[
                       pgov.embedding.PointEncoder] = None) -> int:
    """Parse `argv`, run the subcommand and map failures to exit codes.

    Args:
        argv: arguments without the program name
        encoder = None: point encoder for every stage (default MLP)

    Returns:
        0 on success, 2 on a configuration error, 3 on a malformed file,
        1 on any other pgov error or an invalid value

    Raises:
        SystemExit: On argparse usage errors and "--help"

    """
    settings = None
    try:
        cli_arguments = cli.get_arguments(argv)
        command = cli_arguments['command']
        settings = cfg.get_configuration(
            cli_arguments, setup_logger=True, validate_settings=True,
            reuse_run_config=command not in _FRESH_RUNS)
        summary = pipeline.run_command(command, settings, encoder)
        if summary is not None:
            print(summary)
    except pgov.errors.ConfigError as error:
        logging.critical('Configuration error (%s): %s', error.key, error)
        return pgov.helper.report_failure(settings, str(error), exit_code=2,
                                          print_always=True)
    except pgov.errors.DataFormatError as error:
        logging.critical('Malformed file: %s', error)
        return pgov.helper.report_failure(settings, str(error), exit_code=3,
                                          print_always=True)
    except pgov.errors.PgovError as error:
        logging.critical('%s: %s', type(error).__name__, error)
        return pgov.helper.report_failure(settings, str(error), exit_code=1)
    except ValueError as error:
        logging.critical('Invalid value: %s', error, exc_info=True)
        return pgov.helper.report_failure(settings, f'Invalid value: {error}',
                                          exit_code=1, print_always=True)

    logging.info('Done: Exiting (0)')
    return 0


def main() -> int:
    """Console script entry point.

    Returns:
        Exit code (see run_subcommand)

    Raises:
        SystemExit: always, carrying the exit code

    """
    sys.exit(run_subcommand(sys.argv[1:]))
