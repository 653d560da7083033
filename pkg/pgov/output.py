#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""Defines all report-related functions. Cf. pgov.data.templates for
the summary and SVG templates.

Usage:
    summary = emit_report(out_dir)
    svg = render_loss_curves({'stage 1 total': [(0, 1.2), (1, 0.9)]})
    svg = render_ablation_chart(rows)

"""
import html
import logging
import math
import os
import typing
import pgov.errors
import pgov.formats
import pgov.helper
import pgov.settings
import pgov.trainer

_WIDTH = 640
_HEIGHT = 360
_MARGIN = 50


def _document(title: str, body: typing.List[str]) -> str:
    axes = pgov.helper.get_template('svg_axes').format(
        x0=_MARGIN, y0=_HEIGHT - _MARGIN, x1=_WIDTH - _MARGIN, y1=_MARGIN)
    return pgov.helper.get_template('svg_document').format(
        width=_WIDTH, height=_HEIGHT, title_x=_WIDTH // 2,
        title=html.escape(title), axes=axes, body='\n'.join(body))


def _label(x: float, y: float, text: str, anchor: str = 'start') -> str:
    return pgov.helper.get_template('svg_label').format(
        x=x, y=y, text=html.escape(text), anchor=anchor)


def render_loss_curves(curves: typing.Dict[str, typing.Sequence[
        typing.Tuple[int, float]]]) -> str:
    """Line plot, one polyline of (epoch, loss) points per curve.

    Args:
        curves: curve name -> points in epoch order

    Returns:
        SVG document

    """
    points = [p for curve in curves.values() for p in curve]
    palette = pgov.helper.get_template('svg_palette')
    body = []
    if points:
        first = min(p[0] for p in points)
        span = max(p[0] for p in points) - first or 1
        low = min(0.0, min(p[1] for p in points))
        rise = max(p[1] for p in points) - low or 1.0
        plot_w = _WIDTH - 2 * _MARGIN
        plot_h = _HEIGHT - 2 * _MARGIN
        for index, (name, curve) in enumerate(curves.items()):
            color = palette[index % len(palette)]
            coords = ' '.join(
                '%.2f,%.2f' % (_MARGIN + (epoch - first) / span * plot_w,
                               _HEIGHT - _MARGIN
                               - (value - low) / rise * plot_h)
                for epoch, value in curve)
            body.append(pgov.helper.get_template('svg_polyline').format(
                color=color, points=coords))
            body.append(_label(_WIDTH - _MARGIN, _MARGIN + 14 * index,
                               name, anchor='end'))
        body.append(_label(_MARGIN, _HEIGHT - _MARGIN + 16,
                           f'epoch {first}'))
        body.append(_label(_WIDTH - _MARGIN, _HEIGHT - _MARGIN + 16,
                           f'epoch {first + span}', anchor='end'))
        body.append(_label(_MARGIN - 4, _MARGIN, '%.3g' % (low + rise),
                           anchor='end'))
        body.append(_label(_MARGIN - 4, _HEIGHT - _MARGIN, '%.3g' % low,
                           anchor='end'))
    return _document('loss per epoch', body)


def render_ablation_chart(rows: typing.Sequence[tuple]) -> str:
    """Bar chart of the mean mIoU per preset over its seeds.

    Args:
        rows: (preset, seed, miou, macc) rows

    Returns:
        SVG document

    """
    presets: typing.Dict[str, typing.List[float]] = {}
    for preset, _, miou, _ in rows:
        presets.setdefault(preset, []).append(miou)
    palette = pgov.helper.get_template('svg_palette')
    plot_w = _WIDTH - 2 * _MARGIN
    plot_h = _HEIGHT - 2 * _MARGIN
    slot = plot_w / max(1, len(presets))
    body = []
    for index, (preset, values) in enumerate(presets.items()):
        mean = math.fsum(values) / len(values)
        height = max(0.0, min(1.0, mean)) * plot_h
        x = _MARGIN + index * slot + 0.15 * slot
        body.append(pgov.helper.get_template('svg_bar').format(
            x=x, y=_HEIGHT - _MARGIN - height, width=0.7 * slot,
            height=height, color=palette[index % len(palette)]))
        body.append(_label(x + 0.35 * slot, _HEIGHT - _MARGIN - height - 4,
                           '%.3f' % mean, anchor='middle'))
        body.append(_label(x + 0.35 * slot, _HEIGHT - _MARGIN + 16, preset,
                           anchor='middle'))
    return _document('mean mIoU per preset', body)


def _required(path: str) -> str:
    if not os.path.isfile(path):
        logging.critical('Missing artifact: %s', path)
        raise pgov.errors.MissingArtifactsError(
            f'missing {os.path.basename(path)} in {os.path.dirname(path)}; '
            'run the eval stage first')
    return path


def _render_summary(manifest: dict,
                    report: typing.Dict[typing.Tuple[str, str], float],
                    loss_means: typing.Dict[int, pgov.trainer.LossRow]
                    ) -> str:
    def value(metric, name='all'):
        return report.get((metric, name), float('nan'))

    split = ''
    if ('hiou', 'all') in report:
        split = pgov.helper.get_template('summary_split').format(
            miou_base=value('miou_base'), miou_novel=value('miou_novel'),
            hiou=value('hiou'))
    names = [name for metric, name in report if metric == 'unmatched']
    class_row = pgov.helper.get_template('summary_class_row')
    class_rows = []
    for name in names:
        iou = value('iou', name)
        acc = value('acc', name)
        class_rows.append(class_row.format(
            name=name, iou='-' if math.isnan(iou) else '%.4f' % iou,
            acc='-' if math.isnan(acc) else '%.4f' % acc,
            unmatched=int(value('unmatched', name))))
    losses = [pgov.helper.get_template('summary_loss_row').format(
        stage=stage, alignment=means.alignment,
        consistency=means.consistency, total=means.total)
        for stage, means in sorted(loss_means.items())]
    cosine = value('matched_pair_cosine')
    return pgov.helper.get_template('summary').format(
        preset=manifest.get('preset', '?'), seed=manifest.get('seed', '?'),
        stages=', '.join(manifest.get('stages_done', [])),
        miou=value('miou'), miou_pct=100.0 * value('miou'),
        macc=value('macc'), macc_pct=100.0 * value('macc'), split=split,
        pair_cosine='n/a' if math.isnan(cosine) else '%.4f' % cosine,
        class_header=pgov.helper.get_template('summary_class_header'),
        class_rows='\n'.join(class_rows),
        losses='\n'.join(losses) or 'no loss logs')


def emit_report(out_dir: str) -> str:
    """Write summary.txt and loss_curves.svg of a run directory.

    Args:
        out_dir: run directory after the eval stage

    Returns:
        Summary text

    Raises:
        MissingArtifactsError: If eval_report.csv is missing.

    """
    report = pgov.formats.read_eval_report(_required(os.path.join(
        out_dir, pgov.settings.EVAL_REPORT_FILE_NAME)))
    manifest_path = os.path.join(out_dir, pgov.settings.MANIFEST_FILE_NAME)
    manifest = pgov.formats.read_json(manifest_path) \
        if os.path.isfile(manifest_path) else {}

    curves = {}
    last_means = {}
    for stage in (1, 2):
        path = os.path.join(out_dir, pgov.settings.LOSS_FILE_NAME.format(
            stage=stage))
        if not os.path.isfile(path):
            continue
        means = pgov.trainer.epoch_means(pgov.formats.read_loss_log(path))
        if not means:
            continue
        last_means[stage] = means[-1]
        columns = ('alignment', 'consistency', 'total') if stage == 1 \
            else ('total',)
        for column in columns:
            curves[f'stage {stage} {column}'] = [
                (row.epoch, getattr(row, column)) for row in means]

    summary = _render_summary(manifest, report, last_means)
    pgov.helper.atomic_write(os.path.join(
        out_dir, pgov.settings.SUMMARY_FILE_NAME), summary)
    pgov.helper.atomic_write(os.path.join(
        out_dir, pgov.settings.LOSS_PLOT_FILE_NAME),
        render_loss_curves(curves))
    logging.info('Wrote report to %s', out_dir)
    return summary
