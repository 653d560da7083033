#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""Defines helper functions.

Usage:
    exit_code = report_failure(settings, 'Wrong configuration.', exit_code=2)
    atomic_write(path, data)
    seed = derive_seed(config.seed, 'scene', 3)
    header = get_template('summary_class_header')

"""
import hashlib
import logging
import os
import sys
import tempfile
import typing
import numpy as np
import pgov.data.templates
import pgov.settings


def report_failure(settings: typing.Optional['pgov.settings.PipelineConfig'],
                   printmsg: str,
                   *,
                   exit_code: int = 1, print_always: bool = False,
                   print_msg_as_is: bool = False) -> int:
    """Write message to STDERR if set to do so and hand back the exit code.

    Args:
        settings: full settings. As there are situations where this is
            called before any settings are read, None is an option, too.
        printmsg: message to display
        exit_code = 1: returned unchanged
        print_always = False: ignore
            settings.print_message_on_failure
        print_msg_as_is = False: if False, append exit code and logfile
            destination to output; if True: print `printmsg` only

    Returns:
        `exit_code`

    """
    if settings is not None:
        do_message = settings.print_message_on_failure
        otherwise_invisible = settings.log_to_file
        log = settings.log_file
    else:
        do_message = True
        otherwise_invisible = True
        log = 'No log created yet.'
    if (do_message and otherwise_invisible) or print_always:
        if not print_msg_as_is:
            printmsg = f'{printmsg} See: {log}. Exiting ({exit_code})'
        print(printmsg, file=sys.stderr)
    return exit_code


def atomic_write(path: str, data: typing.Union[bytes, str]) -> None:
    """Write `data` to a temporary file next to `path`, then rename.

    Readers never observe a half-written artifact.

    Args:
        path: destination
        data: str is encoded as UTF-8

    """
    if isinstance(data, str):
        data = data.encode('utf-8')
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    handle, tmp_path = tempfile.mkstemp(dir=directory, prefix='.tmp-')
    try:
        with os.fdopen(handle, 'wb') as tmp_file:
            tmp_file.write(data)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise
    logging.debug('Wrote %s (%s bytes)', path, len(data))


def derive_seed(seed: int, *keys: typing.Union[int, str]) -> int:
    """Derive a 64-bit child seed from a parent seed and a key path.

    Strings are hashed (stable_hash) so e.g. ('scene', 3) and
    ('frame', 3) give unrelated streams.

    Args:
        seed: parent seed
        keys: path of ints / strings

    Returns:
        Unsigned 64-bit integer

    """
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    for key in keys:
        if isinstance(key, str):
            key = stable_hash(key)
        entropy.append(int(key) & 0xFFFFFFFFFFFFFFFF)
    state = np.random.SeedSequence(entropy).generate_state(2, np.uint64)
    return int(state[0])


def stable_hash(text: str) -> int:
    """64-bit hash of `text` that does not change between processes."""
    digest = hashlib.blake2b(text.encode('utf-8'), digest_size=8).digest()
    return int.from_bytes(digest, 'little')


def worker_count() -> int:
    """Worker cap from the environment variable PGOV_THREADS.

    Falls back to the hardware concurrency if unset or malformed.

    """
    fallback = os.cpu_count() or 1
    value = os.getenv(pgov.settings.THREADS_ENV_VARIABLE)
    if value is None:
        return fallback
    try:
        count = int(value)
    except ValueError:
        logging.warning('Ignoring %s=%r (not an integer)',
                        pgov.settings.THREADS_ENV_VARIABLE, value)
        return fallback
    return max(1, count)


def get_template(key: str) -> typing.Union[str, typing.Tuple[str, ...]]:
    """Get an output template.

    Args:
        key: template name (e.g `summary_class_header`)

    Returns:
        Template

    Raises:
        KeyError: If template is not found.

    """
    templates = pgov.data.templates.templates
    if key not in templates:
        logmsg = "Didn't find template: %s in %s."
        logging.critical(logmsg, key, sorted(templates))
        raise KeyError(key)
    return templates[key]
