import numpy as np

from fidbound.model.data import CountsTable
from fidbound.model.strata import (
    NUM_STRATA,
    AssumptionSet,
    ComplianceType,
    ObservableDist,
    StratumVector,
    compliance_strata,
    observable_map,
)


class StrataBuilder:
    """Random stratum vectors and the observable distributions they induce."""

    def __init__(self, seed: int = 0):
        self.rng = np.random.default_rng(seed)

    def stratum_vector(self, assumptions: AssumptionSet | None = None) -> StratumVector:
        free = list(assumptions.free_strata) if assumptions else list(range(NUM_STRATA))
        p = np.zeros(NUM_STRATA)
        p[free] = self.rng.dirichlet(np.ones(len(free)))
        return StratumVector(p / p.sum())

    def observable(self, assumptions: AssumptionSet | None = None) -> ObservableDist:
        return observable_map(self.stratum_vector(assumptions))

    def observable_with_compliers(
        self, assumptions: AssumptionSet, min_complier_mass: float = 0.05
    ) -> ObservableDist:
        complier = list(compliance_strata(ComplianceType.complier))
        while True:
            p = self.stratum_vector(assumptions)
            if p.p[complier].sum() >= min_complier_mass:
                return observable_map(p)

    def counts(self, arm_size: int, q: ObservableDist | None = None) -> CountsTable:
        q = q if q is not None else self.observable()
        arms = [self.rng.multinomial(arm_size, q.arm(z) / q.arm(z).sum()) for z in (0, 1)]
        return CountsTable.from_arms(*arms)

    def assorted_counts(self, num: int) -> list[CountsTable]:
        """Counts from small to large arms, some with empty cells."""
        sizes = [3, 10, 50, 400]
        return [self.counts(sizes[i % len(sizes)]) for i in range(num)]


def expected_counts(q: ObservableDist, arm_size: int) -> CountsTable:
    """Counts whose per-arm proportions round q at the given arm size."""
    arms = [np.rint(arm_size * q.arm(z) / q.arm(z).sum()).astype(int) for z in (0, 1)]
    return CountsTable.from_arms(*arms)


def uniform_observable(assumptions: AssumptionSet) -> ObservableDist:
    """q induced by equal mass on every stratum the assumptions allow."""
    free = list(assumptions.free_strata)
    p = np.zeros(NUM_STRATA)
    p[free] = 1.0 / len(free)
    return observable_map(StratumVector(p))
