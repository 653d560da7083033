#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""Partial-to-global curriculum for open-vocabulary 3D segmentation.

Stage 1 trains a point encoder on partial clouds backprojected from
RGB-D frames whose pixels carry free-form entity strings; stage 2
fine-tunes it on global scenes against pseudo labels obtained by
repeated grid sampling. See README for the command line.

"""

__version__ = '0.1.0'
