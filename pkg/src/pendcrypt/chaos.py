"""One-dimensional chaotic map y -> y * sqrt(a / (y - b)) and diagnostics.

The map (known in the image-encryption literature as the Bulban map) is the
keystream source for the cipher.  Everything here is pure float64 arithmetic:
sequences are bitwise reproducible within one build and reproducible to
1e-12 relative across platforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ChaosDomainError, DataError

DEFAULT_BURN_IN = 500


@dataclass(frozen=True)
class ChaosParams:
    """Map parameters plus initial state; this triple is the cipher key.

    The map requires y - b > 0 along the whole orbit and a > 0.
    """

    a: float
    b: float
    y0: float
    burn_in: int = DEFAULT_BURN_IN

    def __post_init__(self):
        if not self.a > 0:
            raise DataError(f"map parameter a must be > 0, got {self.a}")
        if not self.y0 > self.b:
            raise DataError(
                f"initial state must satisfy y0 > b, got y0={self.y0}, b={self.b}"
            )
        if self.burn_in < 0:
            raise DataError(f"burn_in must be >= 0, got {self.burn_in}")


@dataclass(frozen=True)
class RealSequence:
    """Post-burn-in orbit values together with their generating parameters."""

    values: np.ndarray
    params: ChaosParams


def bulban_step(y: float, params: ChaosParams) -> float:
    """Advance the map one step: y * sqrt(a / (y - b)).

    Raises ChaosDomainError when y <= b.
    """
    d = y - params.b
    if d <= 0.0:
        raise ChaosDomainError(0, y)
    return y * math.sqrt(params.a / d)


def bulban_derivative(y: float, params: ChaosParams) -> float:
    """Analytic derivative of the map, sqrt(a) * (y/2 - b) / (y - b)^(3/2)."""
    d = y - params.b
    if d <= 0.0:
        raise ChaosDomainError(0, y)
    return math.sqrt(params.a) * (0.5 * y - params.b) / d**1.5


def _advance(a: float, b: float, y: float, n: int, base_index: int) -> float:
    sqrt = math.sqrt
    for i in range(n):
        d = y - b
        if d <= 0.0:
            raise ChaosDomainError(base_index + i, y)
        y = y * sqrt(a / d)
    return y


def _collect(a: float, b: float, y: float, n: int, base_index: int):
    out = np.empty(n, dtype=np.float64)
    sqrt = math.sqrt
    for i in range(n):
        d = y - b
        if d <= 0.0:
            raise ChaosDomainError(base_index + i, y)
        y = y * sqrt(a / d)
        out[i] = y
    return y, out


def chaotic_sequence(params: ChaosParams, n: int) -> RealSequence:
    """Return the n orbit values following the burn-in iterates.

    The first returned value is the (burn_in + 1)-th image of y0 under the
    map; identical parameters always give an identical sequence.
    """
    if n < 1:
        raise DataError(f"sequence length must be >= 1, got {n}")
    y = _advance(params.a, params.b, params.y0, params.burn_in, 0)
    _, values = _collect(params.a, params.b, y, n, params.burn_in)
    return RealSequence(values=values, params=params)


def lyapunov_exponent(params: ChaosParams, n: int) -> float:
    """Average log-derivative (1/n) * sum ln|f'(y_k)| over the post-burn-in orbit.

    Positive values indicate sensitive dependence; for the default cipher
    parameters (a, b) = (0.5, 2) the exponent is around +0.55.
    """
    if n < 1:
        raise DataError(f"orbit length must be >= 1, got {n}")
    a, b = params.a, params.b
    y = _advance(a, b, params.y0, params.burn_in, 0)
    sqrt_a = math.sqrt(a)
    total = 0.0
    log = math.log
    sqrt = math.sqrt
    for i in range(n):
        d = y - b
        if d <= 0.0:
            raise ChaosDomainError(params.burn_in + i, y)
        deriv = sqrt_a * (0.5 * y - b) / d**1.5
        total += log(abs(deriv))
        y = y * sqrt(a / d)
    return total / n


def bifurcation_scan(a_grid, b: float, y0: float, settle: int, keep: int):
    """Attractor samples per map parameter a.

    Returns a list of (a, samples) pairs where samples holds `keep`
    post-settle iterates.  Parameters whose orbit leaves the domain are
    recorded with an empty sample array instead of raising.
    """
    a_grid = np.atleast_1d(np.asarray(a_grid, dtype=float))
    if a_grid.size == 0:
        raise DataError("parameter grid must be nonempty")
    results = []
    for a in a_grid:
        try:
            params = ChaosParams(a=float(a), b=b, y0=y0, burn_in=0)
            y = _advance(params.a, params.b, params.y0, settle, 0)
            if keep > 0:
                _, samples = _collect(params.a, params.b, y, keep, settle)
            else:
                samples = np.empty(0, dtype=np.float64)
        except (ChaosDomainError, DataError):
            samples = np.empty(0, dtype=np.float64)
        results.append((float(a), samples))
    return results


class ChaosStream:
    """Sequential draw source over one orbit, with a draw counter.

    The counter only counts post-burn-in draws, which is what the cipher's
    per-round iteration budget is stated in.
    """

    def __init__(self, params: ChaosParams):
        self.params = params
        self._y = _advance(params.a, params.b, params.y0, params.burn_in, 0)
        self._index = params.burn_in
        self.draws = 0

    def draw(self, n: int) -> np.ndarray:
        """Return the next n orbit values (advancing the stream)."""
        self._y, values = _collect(
            self.params.a, self.params.b, self._y, n, self._index
        )
        self._index += n
        self.draws += n
        return values
