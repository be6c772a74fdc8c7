"""Seedable fiducial proposals.

Every Monte Carlo iteration owns a counter-indexed stream: the generator for
iteration `stream_id`, attempt `attempt` is seeded from
`SeedSequence(seed, spawn_key=(stream_id, attempt))`. Draws therefore depend
only on (seed, iteration, attempt), never on how iterations are scheduled.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from fidbound.errors import AllZeroAlpha
from fidbound.model.data import CountsTable
from fidbound.model.draws import FiducialDraw

DEFAULT_SEED = 0


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream_id: int
    attempt: int = 0

    def generator(self) -> np.random.Generator:
        sequence = np.random.SeedSequence(
            self.seed, spawn_key=(self.stream_id, self.attempt)
        )
        return np.random.Generator(np.random.PCG64(sequence))

    def next_attempt(self) -> RngStream:
        return RngStream(self.seed, self.stream_id, self.attempt + 1)


def derive_seed(seed: int, *keys: int) -> int:
    """A 63-bit seed for a keyed sub-experiment (e.g. one replication)."""
    state = np.random.SeedSequence(seed, spawn_key=keys).generate_state(2, np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))


def dirichlet_draw(
    alpha: Sequence[float] | np.ndarray, rng: RngStream | np.random.Generator
) -> np.ndarray:
    """Draw from Dirichlet(alpha) by normalizing independent Gamma(alpha_i, 1).

    Components with alpha_i = 0 are point masses at exactly 0.

    Raises:
        AllZeroAlpha: if no component has positive concentration.
    """
    alpha = np.asarray(alpha, dtype=float)
    assert alpha.ndim == 1 and alpha.size > 0, "alpha must be a non-empty vector."
    assert np.all(alpha >= 0), f"alpha must be nonnegative: {alpha}"
    positive = alpha > 0
    if not positive.any():
        raise AllZeroAlpha(f"Dirichlet concentration is all zero: {alpha.tolist()}")

    generator = rng.generator() if isinstance(rng, RngStream) else rng
    gammas = np.zeros_like(alpha)
    gammas[positive] = generator.standard_gamma(alpha[positive])

    total = gammas.sum()
    if total == 0.0:
        # every positive shape underflowed; only possible for tiny alpha
        gammas[np.flatnonzero(positive)[np.argmax(alpha[positive])]] = 1.0
        total = 1.0
    return gammas / total


def propose(counts: CountsTable, rng: RngStream | np.random.Generator) -> FiducialDraw:
    """Draw (V*_z, V*_z00, ..., V*_z11) ~ Dirichlet(1, n_z00, ..., n_z11) per arm."""
    generator = rng.generator() if isinstance(rng, RngStream) else rng
    arms = [
        dirichlet_draw(np.concatenate(([1.0], counts.arm(z))), generator)
        for z in (0, 1)
    ]
    return FiducialDraw(
        np.array([arm[0] for arm in arms]), np.vstack([arm[1:] for arm in arms])
    )
