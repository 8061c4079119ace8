"""Small shared helpers."""
from __future__ import annotations

import numpy as np


def canonical_column_signs(matrix: np.ndarray) -> np.ndarray:
    """Flip columns so the largest-magnitude entry of each is positive."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.size == 0:
        return matrix.copy()
    anchor = np.argmax(np.abs(matrix), axis=0)
    signs = np.sign(matrix[anchor, np.arange(matrix.shape[1])])
    signs[signs == 0] = 1.0
    return matrix * signs


def format_number(value) -> str:
    """Shortest decimal representation that round-trips through float()."""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))
