"""
Dataset persistence.

Datasets are CSV files with a header row x1..xp,y and 17 significant
digits per value, so 64-bit floats survive a write/read cycle exactly.
Two sidecars travel with a dataset:
    <path>.meta.json   generation record (model, case, seed, truth support, ...)
    <path>.groups.txt  one line per group, space-separated 0-based indices
"""

import json
import os

import numpy as np
import pandas as pd

from penalty import GroupPartition
from rct_base import CSV_FLOAT_FORMAT, FormatError, ParameterError, debug_print
from risk import Dataset

RESPONSE_COLUMN = 'y'


def meta_path(path):
    return f"{path}.meta.json"


def groups_path(path):
    return f"{path}.groups.txt"


# ==================== JSON ====================

def _to_jsonable(value):
    if isinstance(value, dict):
        return {str(k): _to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_to_jsonable(v) for v in value.tolist()]
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if np.isfinite(value) else None
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def write_json(payload, path):
    """Write a report with numpy values converted and keys kept in insertion order."""
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(_to_jsonable(payload), f, indent=2, ensure_ascii=False)
        f.write('\n')


def read_json(path):
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)


# ==================== GROUPS ====================

def write_groups(groups, path):
    with open(path, 'w', encoding='utf-8') as f:
        for block in groups.to_lists():
            f.write(' '.join(str(j) for j in block) + '\n')


def read_groups(path, p=None):
    """
    Parse a groups file.

    Raises:
        FormatError: a token is not a nonnegative integer, or the blocks do not
            form a partition of 0..p−1.
    """
    blocks = []
    with open(path, 'r', encoding='utf-8') as f:
        for line_no, line in enumerate(f, start=1):
            tokens = line.split()
            if not tokens:
                continue
            try:
                block = [int(token) for token in tokens]
            except ValueError:
                raise FormatError(f"groups file {path} has a non-integer index", row=line_no)
            blocks.append(block)
    try:
        return GroupPartition.from_lists(blocks, p=p)
    except ParameterError as e:
        raise FormatError(f"groups file {path} is not a partition: {e}")


# ==================== DATASET CSV ====================

def write_dataset(data, path):
    """Write the CSV plus the metadata sidecar and, when the dataset has groups, the groups sidecar."""
    columns = [f"x{j + 1}" for j in range(data.p)]
    frame = pd.DataFrame(data.design, columns=columns)
    frame[RESPONSE_COLUMN] = data.response
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)

    meta = dict(data.meta)
    if data.truth is not None:
        meta['truth'] = data.truth
    write_json(meta, meta_path(path))
    if data.groups is not None:
        write_groups(data.groups, groups_path(path))
    debug_print(f"wrote {path}: {data.n} rows, {data.p} predictors")


def _numeric_frame(frame, path):
    bad_columns = [c for c in frame.columns if not pd.api.types.is_numeric_dtype(frame[c])]
    if not bad_columns:
        return frame
    column = bad_columns[0]
    coerced = pd.to_numeric(frame[column], errors='coerce')
    bad_rows = np.flatnonzero(coerced.isna() & frame[column].notna())
    row = int(bad_rows[0]) + 1 if bad_rows.size else None
    raise FormatError(f"{path} has a non-numeric value", row=row, column=column)


def read_dataset(path, groups_file=None, standardize=False):
    """
    Load a dataset CSV.

    Predictors are every column except y, in file order. Truth and groups
    come from the sidecars when present; an explicit groups_file wins over
    the sidecar.

    Raises:
        FormatError: no y column, a non-numeric cell (1-based data row and column
            name), or a missing value.
    """
    frame = pd.read_csv(path, float_precision='round_trip')
    if RESPONSE_COLUMN not in frame.columns:
        raise FormatError(f"{path} has no '{RESPONSE_COLUMN}' column")
    frame = _numeric_frame(frame, path)
    if frame.isna().any().any():
        column = frame.columns[frame.isna().any()][0]
        row = int(np.flatnonzero(frame[column].isna())[0]) + 1
        raise FormatError(f"{path} has a missing value", row=row, column=column)

    predictors = [c for c in frame.columns if c != RESPONSE_COLUMN]
    if not predictors:
        raise FormatError(f"{path} has no predictor columns")
    design = frame[predictors].to_numpy(dtype=float)
    response = frame[RESPONSE_COLUMN].to_numpy(dtype=float)

    meta = {}
    truth = None
    if os.path.exists(meta_path(path)):
        meta = read_json(meta_path(path))
        truth = meta.pop('truth', None)
    groups = None
    source = groups_file or (groups_path(path) if os.path.exists(groups_path(path)) else None)
    if source is not None:
        groups = read_groups(source, p=design.shape[1])

    data = Dataset(design=design, response=response, truth=truth, groups=groups, meta=meta)
    return data.standardized() if standardize else data
