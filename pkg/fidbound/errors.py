from __future__ import annotations


class FidboundError(Exception):
    """Base class of every error raised by fidbound."""


class DataError(FidboundError, ValueError):
    """Invalid user input: data files, flags, or arguments."""


class EmptyData(DataError):
    pass


class MissingArm(DataError):
    def __init__(self, arm: int):
        super().__init__(
            f"Instrument arm z={arm} has no records; both arms must be observed."
        )
        self.arm = arm


class MalformedRow(DataError):
    def __init__(self, row: int, reason: str):
        super().__init__(f"Row {row}: {reason}")
        self.row = row
        self.reason = reason


class InvalidConfig(DataError):
    pass


class UnknownEstimand(DataError):
    pass


class UnknownAssumptions(DataError):
    pass


class IncompatibleEstimand(DataError):
    pass


class AllZeroAlpha(DataError):
    pass


class EmptySamples(DataError):
    pass


class InstanceTooLarge(DataError):
    pass


class ZeroComplianceMass(DataError):
    pass


class SamplingError(FidboundError, RuntimeError):
    pass


class AcceptanceStalled(SamplingError):
    """The acceptance sampler reached its attempt cap before collecting enough draws.

    A stalled sampler is the practical form of an acceptance rate near 0,
    i.e. the observed data likely disagree with the IV assumptions.
    """

    def __init__(self, attempts: int, accepted: int, requested: int):
        rate = accepted / attempts if attempts else 0.0
        super().__init__(
            f"Acceptance sampler stalled after {attempts} attempts: "
            f"{accepted} of {requested} draws accepted (rate so far {rate:.3g}). "
            "The IV assumptions are likely violated by the data."
        )
        self.attempts = attempts
        self.accepted = accepted
        self.requested = requested

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.attempts if self.attempts else 0.0


class AllDrawsInfeasible(SamplingError):
    pass


class InfeasibleDraw(FidboundError, RuntimeError):
    pass


class InfeasibleAtPlugIn(FidboundError, RuntimeError):
    pass


class NumericalFailure(FidboundError, ArithmeticError):
    pass
