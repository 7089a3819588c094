"""Shared numeric comparison policy.

Every module compares floats through the same mixed-tolerance rule
|a - b| <= atol + rtol * max(|a|, |b|), so there is exactly one place
where "equal at desk scale" is defined.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Tolerance:
    atol: float = 1e-12
    rtol: float = 1e-9

    def margin(self, a, b):
        return self.atol + self.rtol * np.maximum(np.abs(a), np.abs(b))

    def close(self, a, b):
        """Elementwise mixed-tolerance equality; scalars or arrays."""
        return np.all(np.abs(np.asarray(a, float) - np.asarray(b, float))
                      <= self.margin(np.asarray(a, float), np.asarray(b, float)))

    def leq(self, a, b):
        """a <= b up to the mixed tolerance."""
        return np.all(np.asarray(a, float) <= np.asarray(b, float)
                      + self.margin(np.asarray(a, float), np.asarray(b, float)))


DEFAULT = Tolerance()
