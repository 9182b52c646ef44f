from typing import Iterable, List, Sequence, Tuple, Union
from pathlib import Path
import json
import numpy as np
import pandas as pd

from skull2face.errors import DimMismatch, InvalidInputError, MissingFile, NonFinite
from skull2face.nn.tensor import Array_like

PathLike = Union[str, Path]


def moving_average(a: Array_like, n: int = 3) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.size < n:
        return a.copy()
    ret = np.cumsum(a)
    ret[n:] = ret[n:] - ret[:-n]
    return ret[n - 1:] / n


def format_float(value: float) -> str:
    '''Shortest string that parses back to the same double'''
    return repr(float(value))


def parse_floats(cells: Sequence[str]) -> np.ndarray:
    return np.array([float(c) for c in cells], dtype=np.float64)


def write_csv(path: PathLike, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    '''Writes rows with floats in round-trip form so reading back is bit-exact'''
    formatted: List[List[str]] = []
    for row in rows:
        formatted.append([format_float(v) if isinstance(v, (float, np.floating)) else str(v)
                          for v in row])
    frame = pd.DataFrame(formatted, columns=list(header))
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator='\n')


def read_csv(path: PathLike) -> pd.DataFrame:
    '''Reads every cell as a string; numeric conversion is left to the caller'''
    return pd.read_csv(path, dtype=str, keep_default_na=False)


def dumps_json(payload) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + '\n'


def write_json(path: PathLike, payload) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(dumps_json(payload))


def read_vector_csv(path: PathLike, key_columns: Sequence[str],
                    prefix: str) -> Tuple[List[Tuple[str, ...]], np.ndarray]:
    r'''Reads a ``<key columns>,<prefix>0,...,<prefix>{d-1}`` table.

        Returns the key tuples in file order and an (n, d) float64 matrix.
        Ragged rows raise DimMismatch, unparsable or non-finite cells raise NonFinite.'''
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f'file not found: {path}', path=str(path))
    try:
        frame = read_csv(path)
    except pd.errors.ParserError as e:
        raise DimMismatch(f'{path}: rows have differing lengths ({e})', path=str(path)) from e
    except pd.errors.EmptyDataError as e:
        raise InvalidInputError(f'{path} is empty', path=str(path)) from e

    columns = list(frame.columns)
    n_keys = len(key_columns)
    dim = len(columns) - n_keys
    expected = list(key_columns) + [f'{prefix}{i}' for i in range(dim)]
    if dim < 1 or columns != expected:
        raise InvalidInputError(
            f'{path}: header must be {",".join(key_columns)},{prefix}0,...,{prefix}<d-1>', path=str(path))

    cells = frame.iloc[:, n_keys:].to_numpy(dtype=object)
    missing = pd.isna(cells) | (cells == '')
    if missing.any():
        row = int(np.nonzero(missing.any(axis=1))[0][0])
        width = int((~missing[row]).sum())
        raise DimMismatch(f'{path}: row {row + 1} has {width} values, expected {dim}',
                          path=str(path), row=row + 1)
    try:
        matrix = cells.astype(np.float64)
    except ValueError as e:
        raise NonFinite(f'{path}: unparsable value ({e})', path=str(path)) from e
    if not np.isfinite(matrix).all():
        row = int(np.nonzero(~np.isfinite(matrix).all(axis=1))[0][0])
        raise NonFinite(f'{path}: row {row + 1} holds a non-finite value', path=str(path), row=row + 1)

    keys = [tuple(str(v) for v in row) for row in frame.iloc[:, :n_keys].itertuples(index=False, name=None)]
    return keys, matrix.reshape(len(keys), dim)


def write_vector_csv(path: PathLike, key_columns: Sequence[str], prefix: str,
                     keys: Sequence[Sequence[str]], matrix: np.ndarray) -> None:
    header = list(key_columns) + [f'{prefix}{i}' for i in range(matrix.shape[1])]
    write_csv(path, header, (list(key) + [float(v) for v in row] for key, row in zip(keys, matrix)))
