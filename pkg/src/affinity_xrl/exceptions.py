"""Exception hierarchy.

Every error raised by the package derives from :class:`AffinityXRLError`, and
most also derive from ``ValueError`` so callers using the usual sklearn-style
``except ValueError`` keep working.
"""


class AffinityXRLError(Exception):
    pass


class ValidationError(AffinityXRLError, ValueError):
    pass


# market_data
class MissingFile(AffinityXRLError, FileNotFoundError):
    pass


class ParseError(ValidationError):
    def __init__(self, line, message="could not parse row"):
        self.line = line
        super().__init__(f"line {line}: {message}")


class NonPositivePrice(ValidationError):
    def __init__(self, line, value=None):
        self.line = line
        super().__init__(f"line {line}: non-positive price {value!r}")


class DateGap(ValidationError):
    def __init__(self, expected, found):
        self.expected = expected
        self.found = found
        super().__init__(f"expected month {expected}, found {found}")


class EmptyInput(ValidationError):
    pass


class ZeroSpan(ValidationError):
    pass


class FastNotLessThanSlow(ValidationError):
    pass


class SeriesTooShort(ValidationError):
    pass


class TooFewMonths(ValidationError):
    pass


# invest_env
class MisalignedSeries(ValidationError):
    pass


class HorizonExceedsData(ValidationError):
    pass


class EpisodeFinished(AffinityXRLError, RuntimeError):
    pass


class ActionOffSimplex(ValidationError):
    pass


# affinity_ddpg
class ShapeMismatch(ValidationError):
    pass


class EmptyBatch(ValidationError):
    pass


class TauOutOfRange(ValidationError):
    pass


class NonFiniteLoss(AffinityXRLError, RuntimeError):
    def __init__(self, agent, episode):
        self.agent = agent
        self.episode = episode
        super().__init__(f"non-finite loss for agent {agent!r} in episode {episode}")


# discretize / surrogate / evaluation
class InvalidSymbol(ValidationError):
    pass


class TraceTooShort(ValidationError):
    pass


class UnknownSymbol(ValidationError):
    pass


class ZeroProbabilityObservation(ValidationError):
    pass


class HorizonMismatch(ValidationError):
    pass


class ConfigError(ValidationError):
    pass
