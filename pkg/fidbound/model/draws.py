from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from fidbound.model.data import CountsTable

DRAW_TOLERANCE = 1e-12


@dataclass(frozen=True, eq=False)
class FiducialDraw:
    """One proposal V* for both arms.

    `slack[z]` is V*_z and `v[z]` holds (V*_z00, V*_z01, V*_z10, V*_z11).
    """

    slack: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        slack = np.array(self.slack, dtype=float).reshape(2)
        v = np.array(self.v, dtype=float).reshape(2, 4)
        if np.any(slack < 0) or np.any(v < 0):
            raise ValueError("Fiducial draw components must be nonnegative.")
        for z in (0, 1):
            total = slack[z] + v[z].sum()
            if abs(total - 1.0) > DRAW_TOLERANCE:
                raise ValueError(f"Arm z={z} of the draw sums to {total}, not 1.")
        slack.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "slack", slack)
        object.__setattr__(self, "v", v)

    @property
    def flat(self) -> np.ndarray:
        """(V*_000, ..., V*_111) in (z, a, y) lexicographic order."""
        return self.v.reshape(8)

    def cell(self, z: int, a: int, y: int) -> float:
        return float(self.v[z, 2 * a + y])

    @staticmethod
    def from_cells(v: Sequence[float] | np.ndarray) -> FiducialDraw:
        """A draw whose slacks absorb whatever mass the 8 cells leave."""
        v = np.asarray(v, dtype=float).reshape(2, 4)
        return FiducialDraw(np.clip(1.0 - v.sum(axis=1), 0.0, None), v)

    @staticmethod
    def empirical(counts: CountsTable) -> FiducialDraw:
        """The draw v = q_hat with zero slack; its polytope is the plug-in one."""
        counts.require_both_arms()
        v = np.vstack([counts.arm(z) / counts.n_z[z] for z in (0, 1)])
        v = v / v.sum(axis=1, keepdims=True)
        return FiducialDraw(np.zeros(2), v)
