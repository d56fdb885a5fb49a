from __future__ import annotations

from typing import Callable, Literal, Tuple

import numpy as np
from numpy.typing import NDArray

FloatArray = NDArray[np.float64]

Determinant = int
"""Occupation bitstring: bit ``p`` set means spin orbital ``p`` is occupied."""

Pair = Tuple[int, int]

GradientMode = Literal["analytic", "finite-difference"]

ObjectiveFunction = Callable[[FloatArray], Tuple[float, FloatArray]]
