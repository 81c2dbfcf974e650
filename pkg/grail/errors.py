"""Exception hierarchy shared by every grail module."""

from typing import Optional


class GrailError(Exception):
    """Base class for all errors raised by grail."""


class ContractViolation(GrailError, ValueError):
    """An input broke a documented precondition (bad state, shape, range)."""


class PlanningError(GrailError):
    """No plan exists from the start state to the requested goal."""


class BiasError(PlanningError):
    """A preferred route would be longer than the optimal plan."""


class TrainingDiverged(GrailError):
    """A loss or gradient became non-finite during training.

    Attributes:
        stage (str): Learner stage that diverged (e.g. ``"bc"``, ``"gail"``).
        index (int): Epoch or round at which divergence was detected.
    """

    def __init__(self, stage: str, index: int, detail: str = "") -> None:
        self.stage = stage
        self.index = index
        message = f"{stage} diverged at {index}"
        if detail:
            message = f"{message}: {detail}"
        super().__init__(message)


class UnsupportedMetric(GrailError):
    """A scoring metric was requested for a policy kind it cannot score."""


class BankError(GrailError):
    """Base class for policy bank persistence failures."""


class CorruptBank(BankError):
    """A bank file is missing, truncated, or does not match its digest."""

    def __init__(self, message: str, goal: Optional[str] = None) -> None:
        self.goal = goal
        super().__init__(message)


class BankVersionError(BankError):
    """A policy file carries a format tag this version cannot read."""


class ConfigError(GrailError):
    """An experiment configuration is unreadable or inconsistent."""


class GoalTrainingError(GrailError):
    """Training the policy for one goal failed.

    Attributes:
        goal (str): Label of the goal whose training failed.
    """

    def __init__(self, goal: str, cause: BaseException) -> None:
        self.goal = goal
        super().__init__(f"training failed for goal {goal}: {cause}")
