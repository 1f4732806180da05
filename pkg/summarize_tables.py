#!/usr/bin/env python3
"""
Merge benchmark CSV tables into one JSON summary, adding the relative
difference between our mean ℓ2 loss and the reference value for every row
that has one.
"""

import argparse
import os
import sys

import pandas as pd

from dataset_io import write_json
from evaluation import json_records


def l2_vs_reference(frame):
    """100·(ours − reference)/reference, NaN where no reference exists."""
    if 'reference_l2' not in frame.columns:
        return pd.Series(float('nan'), index=frame.index)
    return 100.0 * (frame['l2_mean'] - frame['reference_l2']) / frame['reference_l2']


def summarize(paths):
    frames = []
    missing = []
    for path in paths:
        if not os.path.exists(path):
            missing.append(path)
            continue
        frame = pd.read_csv(path, float_precision='round_trip')
        frame['l2_vs_reference_percent'] = l2_vs_reference(frame)
        frame['source'] = os.path.basename(path)
        frames.append(frame)
    merged = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame()
    return merged, missing


def main(argv=None):
    parser = argparse.ArgumentParser(description="Merge benchmark tables")
    parser.add_argument('tables', nargs='+', help="benchmark CSV files")
    parser.add_argument('--output', default='tables_summary.json')
    args = parser.parse_args(argv)

    merged, missing = summarize(args.tables)
    for path in missing:
        print(f"WARNING: {path} not found, skipped")
    if merged.empty:
        print("No tables to summarize!")
        return 1

    write_json({'rows': json_records(merged), 'missing': missing}, args.output)
    print(f"Summarized {len(merged)} rows from {len(args.tables) - len(missing)} table(s) -> {args.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
