"""Hypothesis strategies for group points and isometries."""

import numpy as np
from hypothesis import strategies as st

from hrigid.hgroup import Isometry, random_unitary

coord = st.floats(-3.0, 3.0, allow_nan=False, allow_infinity=False)
dims = st.integers(1, 3)


@st.composite
def points(draw, n, count=1):
    vals = draw(st.lists(coord, min_size=count * (2 * n + 1), max_size=count * (2 * n + 1)))
    return np.array(vals).reshape(count, 2 * n + 1)


@st.composite
def isometries(draw, n):
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    return Isometry(random_unitary(n, rng), draw(points(n))[0], draw(st.booleans()))
