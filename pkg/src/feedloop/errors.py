"""Exception types shared across the package."""


class FeedloopError(Exception):
    """Base class for all package-specific errors."""


class SamplingExhausted(FeedloopError):
    """Rejection sampling ran out of attempts (table too crowded)."""


class InvalidTarget(FeedloopError):
    """A pick/place action referenced a bowl as pick, a missing object, or itself."""


class UnknownTask(FeedloopError):
    """Task id is not registered with the goal evaluator."""


class UnaffordedSkill(FeedloopError):
    """A kitchen skill was executed while its preconditions do not hold."""


class UnknownObjectInGoal(FeedloopError):
    """A parsed sub-goal names an object that does not exist in the scene."""


class FixtureMiss(FeedloopError):
    """The scripted human source has no answer for a question."""


class DialectMismatch(FeedloopError):
    """An entry variant is not legal in the transcript's dialect."""


class UnparseableCompletion(FeedloopError):
    """No syntactically valid entry could be extracted from a completion."""


class MalformedGoalList(FeedloopError):
    """A quoted goal-state item does not match the sub-goal template."""


class NoFeasibleAction(FeedloopError):
    """Every remaining sub-goal's action is unafforded."""


class BackendUnavailable(FeedloopError):
    """The completion service stayed unreachable after all retries."""


class AuthError(FeedloopError):
    """The completion service rejected the credentials (never retried)."""


class PromptDivergence(FeedloopError):
    """A replayed prompt does not match the recorded transcript prefix."""
