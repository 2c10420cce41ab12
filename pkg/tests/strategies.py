"""Shared hypothesis strategies."""

import numpy as np
from hypothesis import strategies as st

coord = st.floats(-3.0, 3.0, allow_nan=False, allow_infinity=False)


def points(n=1):
    return st.lists(coord, min_size=2 * n + 1, max_size=2 * n + 1).map(np.array)


def nonzero_points(n=1):
    return points(n).filter(lambda x: np.abs(x).max() > 1e-3)


scales = st.floats(0.2, 5.0)
