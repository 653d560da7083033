#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""Defines the exception hierarchy.

Two families decide the exit code of a console run (see
pgov.console.run_subcommand):
    * ConfigError: exit code 2; `key` names the offending setting
    * DataFormatError: exit code 3; `path` and `offset` locate the defect

Every other PgovError exits with 1.

"""
import typing


class PgovError(Exception):
    """Root of all errors raised by pgov."""


class ConfigError(PgovError):
    """Invalid or unknown configuration value."""

    def __init__(self, message: str, key: typing.Optional[str] = None):
        super().__init__(message)
        self.key = key


class DataFormatError(PgovError):
    """Malformed file on disk."""

    def __init__(self, message: str, path: typing.Optional[str] = None,
                 offset: typing.Optional[int] = None):
        self.reason = message
        if path is not None:
            message = f'{path}: {message}'
        if offset is not None:
            message = f'{message} (byte offset {offset})'
        super().__init__(message)
        self.path = path
        self.offset = offset


class MissingArtifactsError(PgovError):
    """A stage input written by an earlier stage is absent."""


# scene_synth

class EmptySpecError(PgovError):
    """Scene spec without objects."""


class BadSplitError(ConfigError):
    """Base/novel split that does not partition the categories."""


# geometry

class InvalidDepthError(PgovError):
    """Depth that is zero, negative or not finite."""


class BehindCameraError(PgovError):
    """Point with non-positive camera-frame depth."""


class DimMismatchError(PgovError):
    """Raster dimensions disagree."""


# entity_oracle

class MissingProvenanceError(PgovError):
    """Frame without a source-id raster."""


class FormatError(DataFormatError):
    """Truncated or malformed entity mask / vocabulary."""


class VocabMismatchError(DataFormatError):
    """Entity id outside the frame vocabulary."""


# embedding

class ShapeMismatchError(PgovError):
    """Array shapes do not chain."""


class StaleCacheError(PgovError):
    """Forward cache does not belong to the parameters or gradient."""


# trainer

class ZeroVectorError(PgovError):
    """Cosine similarity of a zero vector."""


class EmptyBatchError(PgovError):
    """Loss over zero rows."""


class NoLabelsError(PgovError):
    """Every point of every partial cloud is unlabeled."""


class NoAcceptedLabelsError(PgovError):
    """Pseudo-label set without accepted points."""


# pseudo_label / metrics

class EmptyVocabularyError(PgovError):
    """Prediction over an empty vocabulary."""


class OutOfRangeLabelError(PgovError):
    """Label outside [0, K) that is not an ignore / unmatched marker."""


class EmptyMatrixError(PgovError):
    """Confusion matrix without evaluated points."""
