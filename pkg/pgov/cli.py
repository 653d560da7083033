#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""Defines and manages command line interface.

Usage:
    cli_args = get_arguments(argv)
    This returns all cli_args (validated), the subcommand as
    cli_args['command']

"""
import argparse
import copy
import typing
import pgov.errors
import pgov.settings
import pgov.validation


def _get_cli_parser(description: str, subcommands: dict, cli_options: list
                    ) -> argparse.ArgumentParser:
    """Setup CLI with description, subcommands and arguments.

    Every subcommand accepts every option, so options may follow the
    subcommand name.

    Args:
        description: CLI description (displayed in "--help")
        subcommands: name -> help text
        cli_options: nested list (see pgov.settings.CLI_OPTIONS
        for further information regardings its structure)

    Returns:
        Set-up parser

    """
    parser = argparse.ArgumentParser(prog='pgov', description=description)
    commands = parser.add_subparsers(dest='command', metavar='COMMAND')
    commands.required = True
    for name, helpmsg in subcommands.items():
        subparser = commands.add_parser(name, help=helpmsg,
                                        description=helpmsg)
        for option in cli_options:
            subparser.add_argument(*option[0], **copy.deepcopy(option[1]))
    return parser


def _validate(cli_args: dict) -> None:
    """Validates cli_args.

    Validation is done as specified in pgov.validation.CLI_CHECKS.

    Args:
        cli_args: parsed command line arguments

    Raises:
        ConfigError: If invalid arguments are found; the message lists
        all of them.

    """
    messages = list()

    for check in pgov.validation.CLI_CHECKS:
        call_check = check[0]
        invalid_msg = check[1]
        if call_check(cli_args):
            messages.append(invalid_msg.format(**cli_args))
    total = len(messages)
    if total == 1:
        raise pgov.errors.ConfigError(f'Error: {messages[0]}')
    if total > 1:
        lines = [f' {number}/{total}: {message}'
                 for number, message in enumerate(messages, 1)]
        raise pgov.errors.ConfigError('\n'.join(['Errors:'] + lines))


def get_arguments(argv: typing.Optional[typing.Sequence[str]] = None
                  ) -> dict:
    """Read arguments from command line.

    This is done by using the parser obtained by
    _get_cli_parser

    Args:
        argv = None: arguments without the program name; None reads
        sys.argv

    Returns:
        Parsed command line arguments

    Raises:
        SystemExit: On usage errors and "--help" (argparse)
        ConfigError: If the arguments contradict each other.

    """
    parser = _get_cli_parser(pgov.settings.CLI_DESCRIPTION,
                             pgov.settings.SUBCOMMANDS,
                             pgov.settings.CLI_OPTIONS)
    cli_args = vars(parser.parse_args(argv))
    _validate(cli_args)
    return cli_args
