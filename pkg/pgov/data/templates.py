#!/usr/bin/env python3
# -*- coding: utf-8 -*-
""" Report and plot templates, looked up by pgov.helper.get_template."""

summary_full = '''PGOV RUN SUMMARY

preset: {preset}
seed: {seed}
stages: {stages}

mIoU: {miou:.4f} ({miou_pct:.2f} %)
mAcc: {macc:.4f} ({macc_pct:.2f} %)
{split}
matched-pair cosine (held-out adjacent frames): {pair_cosine}

per-class scores
{class_header}
{class_rows}

losses (last epoch mean)
{losses}
'''

summary_split = ('mIoU base: {miou_base:.4f}, mIoU novel: {miou_novel:.4f}, '
                 'hIoU: {hiou:.4f}\n')

svg_document = '''<svg xmlns="http://www.w3.org/2000/svg" width="{width}" \
height="{height}" viewBox="0 0 {width} {height}">
<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>
<text x="{title_x}" y="20" font-family="sans-serif" font-size="14" \
text-anchor="middle">{title}</text>
{axes}
{body}
</svg>
'''

templates = dict(
    summary=summary_full,
    summary_split=summary_split,
    # name, iou, acc, unmatched
    summary_class_header='{:<14} {:>8} {:>8} {:>10}'.format(
        'class', 'IoU', 'Acc', 'unmatched'),
    summary_class_row='{name:<14} {iou:>8} {acc:>8} {unmatched:>10}',
    summary_loss_row=('stage {stage}: alignment {alignment:.4f}, '
                      'consistency {consistency:.4f}, total {total:.4f}'),
    svg_document=svg_document,
    svg_axes=('<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" '
              'stroke="black"/>\n<line x1="{x0}" y1="{y0}" x2="{x0}" '
              'y2="{y1}" stroke="black"/>'),
    svg_polyline=('<polyline fill="none" stroke="{color}" '
                  'stroke-width="2" points="{points}"/>'),
    svg_bar=('<rect x="{x:.2f}" y="{y:.2f}" width="{width:.2f}" '
             'height="{height:.2f}" fill="{color}"/>'),
    svg_label=('<text x="{x:.2f}" y="{y:.2f}" font-family="sans-serif" '
               'font-size="11" text-anchor="{anchor}">{text}</text>'),
    # one color per curve / bar group
    svg_palette=('#1f77b4', '#d62728', '#2ca02c', '#ff7f0e', '#9467bd',
                 '#8c564b')
)
