"""Latent principal strata of the binary IV model and the estimands over them.

A person's stratum is the tuple (A_0, A_1, Y_0, Y_1) written `ij,kl`:
`ij` is the compliance type (treatment taken under z=0 and z=1) and
`kl` the response type (outcome under a=0 and a=1).
Strata are always indexed lexicographically, index = 4 * int(ij, 2) + int(kl, 2).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from fidbound.errors import IncompatibleEstimand, UnknownAssumptions, UnknownEstimand

NUM_STRATA = 16
NUM_CELLS = 8

STRATUM_TOLERANCE = 1e-9
ARM_TOLERANCE = 1e-12

TYPE_CODES: tuple[str, ...] = ("00", "01", "10", "11")
STRATA: tuple[tuple[str, str], ...] = tuple(itertools.product(TYPE_CODES, TYPE_CODES))
# (z, a, y) lexicographic, flat index = 4 * z + 2 * a + y
CELLS: tuple[tuple[int, int, int], ...] = tuple(itertools.product((0, 1), repeat=3))


class ComplianceType(Enum):
    never_taker = "00"
    complier = "01"
    defier = "10"
    always_taker = "11"


def stratum_index(ij: str, kl: str) -> int:
    return 4 * int(ij, 2) + int(kl, 2)


def cell_index(z: int, a: int, y: int) -> int:
    return 4 * z + 2 * a + y


def compliance_strata(compliance: ComplianceType) -> tuple[int, ...]:
    return tuple(stratum_index(compliance.value, kl) for kl in TYPE_CODES)


def _build_observable_matrix() -> np.ndarray:
    # Stratum ij,kl lands in cell (z, a, y) iff A_z = a and Y_a = y.
    matrix = np.zeros((NUM_CELLS, NUM_STRATA))
    for s, (ij, kl) in enumerate(STRATA):
        for c, (z, a, y) in enumerate(CELLS):
            if int(ij[z]) == a and int(kl[a]) == y:
                matrix[c, s] = 1.0
    matrix.flags.writeable = False
    return matrix


OBSERVABLE_MATRIX: np.ndarray = _build_observable_matrix()


def _frozen(values, shape: tuple[int, ...]) -> np.ndarray:
    array = np.array(values, dtype=float).reshape(shape)
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class StratumVector:
    """The 16 probabilities p_{ij,kl}, nonnegative and summing to one."""

    p: np.ndarray

    def __post_init__(self):
        p = _frozen(self.p, (NUM_STRATA,))
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise ValueError(f"Stratum probabilities must be finite and >= 0: {p}")
        if abs(p.sum() - 1.0) > STRATUM_TOLERANCE:
            raise ValueError(f"Stratum probabilities sum to {p.sum()}, not 1.")
        object.__setattr__(self, "p", p)

    def __getitem__(self, key: tuple[str, str]) -> float:
        return float(self.p[stratum_index(*key)])

    @staticmethod
    def uniform() -> StratumVector:
        return StratumVector(np.full(NUM_STRATA, 1.0 / NUM_STRATA))

    @staticmethod
    def point_mass(ij: str, kl: str) -> StratumVector:
        p = np.zeros(NUM_STRATA)
        p[stratum_index(ij, kl)] = 1.0
        return StratumVector(p)


@dataclass(frozen=True, eq=False)
class ObservableDist:
    """q[z][a][y] = P(A=a, Y=y | Z=z); each arm lies on the 3-simplex."""

    q: np.ndarray

    def __post_init__(self):
        q = _frozen(self.q, (2, 2, 2))
        if not np.all(np.isfinite(q)) or np.any(q < 0) or np.any(q > 1):
            raise ValueError(f"Cell probabilities must lie in [0, 1]: {q.ravel()}")
        for z in (0, 1):
            total = q[z].sum()
            if abs(total - 1.0) > ARM_TOLERANCE:
                raise ValueError(f"Arm z={z} probabilities sum to {total}, not 1.")
        object.__setattr__(self, "q", q)

    def __getitem__(self, cell: tuple[int, int, int]) -> float:
        return float(self.q[cell])

    @property
    def flat(self) -> np.ndarray:
        """The pair (q_000, ..., q_111) in (z, a, y) lexicographic order."""
        return self.q.reshape(NUM_CELLS)

    def arm(self, z: int) -> np.ndarray:
        return self.q[z].reshape(4)


def observable_map(p: StratumVector) -> ObservableDist:
    """Map latent strata to observable cell probabilities.

    Each arm's four cells partition the 16 strata, so the result is again
    a pair of points on the 3-simplex; the map is linear in `p`.
    """
    q = OBSERVABLE_MATRIX @ p.p
    # exact renormalization per arm removes accumulated rounding
    q = q.reshape(2, 4)
    q = q / q.sum(axis=1, keepdims=True)
    return ObservableDist(q.reshape(2, 2, 2))


class EstimandKind(Enum):
    ate = "ate"
    cace = "cace"
    nudge = "nudge"
    never_taker_ace = "never-taker-ace"
    always_taker_ace = "always-taker-ace"
    defier_ace = "defier-ace"

    @staticmethod
    def parse(kind: EstimandKind | str) -> EstimandKind:
        if isinstance(kind, EstimandKind):
            return kind
        normalized = str(kind).strip().lower().replace("_", "-")
        try:
            return EstimandKind(normalized)
        except ValueError:
            supported = ", ".join(k.value for k in EstimandKind)
            raise UnknownEstimand(
                f"Unknown estimand '{kind}'. Supported: {supported}."
            ) from None


_STRATUM_ACE_TYPES: dict[EstimandKind, tuple[ComplianceType, ...]] = {
    EstimandKind.cace: (ComplianceType.complier,),
    EstimandKind.never_taker_ace: (ComplianceType.never_taker,),
    EstimandKind.always_taker_ace: (ComplianceType.always_taker,),
    EstimandKind.defier_ace: (ComplianceType.defier,),
    EstimandKind.nudge: (ComplianceType.complier, ComplianceType.defier),
}


@dataclass(frozen=True, eq=False)
class Estimand:
    """numerator . p / denominator . p over the 16 strata.

    Linear estimands carry `denominator=None`, meaning the constant 1.
    Fractional ones carry 0/1 indicator coefficients selecting the
    compliance classes being conditioned on.
    """

    kind: EstimandKind
    numerator: np.ndarray
    denominator: np.ndarray | None = None
    compliance_types: tuple[ComplianceType, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "numerator", _frozen(self.numerator, (NUM_STRATA,)))
        if self.denominator is not None:
            denominator = _frozen(self.denominator, (NUM_STRATA,))
            assert set(np.unique(denominator)) <= {0.0, 1.0}, (
                "Denominator coefficients must be indicators."
            )
            object.__setattr__(self, "denominator", denominator)

    @property
    def is_linear(self) -> bool:
        return self.denominator is None

    def evaluate(self, p: StratumVector | np.ndarray) -> float:
        values = p.p if isinstance(p, StratumVector) else np.asarray(p, dtype=float)
        numerator = float(self.numerator @ values)
        if self.is_linear:
            return numerator
        return numerator / float(self.denominator @ values)


def _response_contrast(strata_types: tuple[str, ...]) -> np.ndarray:
    # +1 on response type 01 (helped), -1 on 10 (hurt)
    coefficients = np.zeros(NUM_STRATA)
    for ij in strata_types:
        coefficients[stratum_index(ij, "01")] = 1.0
        coefficients[stratum_index(ij, "10")] = -1.0
    return coefficients


def estimand(kind: EstimandKind | str) -> Estimand:
    """Build the coefficient vectors of a supported causal estimand.

    Raises:
        UnknownEstimand: if `kind` is not one of `EstimandKind`.
    """
    kind = EstimandKind.parse(kind)
    if kind is EstimandKind.ate:
        return Estimand(kind, _response_contrast(TYPE_CODES))

    compliance_types = _STRATUM_ACE_TYPES[kind]
    codes = tuple(c.value for c in compliance_types)
    denominator = np.zeros(NUM_STRATA)
    for compliance in compliance_types:
        denominator[list(compliance_strata(compliance))] = 1.0
    return Estimand(kind, _response_contrast(codes), denominator, compliance_types)


class AssumptionLabel(Enum):
    core_iv = "core"
    monotonicity = "monotonicity"
    new_drug = "new-drug"

    @staticmethod
    def parse(label: AssumptionLabel | str) -> AssumptionLabel:
        if isinstance(label, AssumptionLabel):
            return label
        normalized = str(label).strip().lower().replace("_", "-")
        aliases = {"core-iv": "core", "mono": "monotonicity", "newdrug": "new-drug"}
        normalized = aliases.get(normalized, normalized)
        try:
            return AssumptionLabel(normalized)
        except ValueError:
            supported = ", ".join(a.value for a in AssumptionLabel)
            raise UnknownAssumptions(
                f"Unknown assumption set '{label}'. Supported: {supported}."
            ) from None


_EXCLUDED_TYPES: dict[AssumptionLabel, tuple[ComplianceType, ...]] = {
    AssumptionLabel.core_iv: (),
    AssumptionLabel.monotonicity: (ComplianceType.defier,),
    AssumptionLabel.new_drug: (ComplianceType.defier, ComplianceType.always_taker),
}


@dataclass(frozen=True)
class AssumptionSet:
    label: AssumptionLabel
    forced_zero: frozenset[int]

    @property
    def free_strata(self) -> tuple[int, ...]:
        return tuple(s for s in range(NUM_STRATA) if s not in self.forced_zero)

    def check_estimand(self, target: Estimand):
        """Reject fractional estimands whose conditioning classes are all excluded."""
        if target.is_linear:
            return
        support = set(np.flatnonzero(target.denominator).tolist())
        if support <= self.forced_zero:
            raise IncompatibleEstimand(
                f"Estimand '{target.kind.value}' conditions on strata that the "
                f"'{self.label.value}' assumptions force to zero."
            )


def assumption_set(label: AssumptionLabel | str) -> AssumptionSet:
    label = AssumptionLabel.parse(label)
    forced = frozenset(
        s
        for compliance in _EXCLUDED_TYPES[label]
        for s in compliance_strata(compliance)
    )
    return AssumptionSet(label, forced)
