"""Exception hierarchy shared by all levelcross modules."""


class LevelCrossError(Exception):
    """Base class for every error raised by this package."""


class InvalidDistribution(LevelCrossError, ValueError):
    pass


class NonzeroMean(InvalidDistribution):
    pass


class BadProbabilities(InvalidDistribution):
    pass


class DegenerateSupport(InvalidDistribution):
    pass


class EmptyPath(LevelCrossError, ValueError):
    pass


class CensoredFractionTooHigh(LevelCrossError):
    def __init__(self, fraction, limit):
        super().__init__(
            f"censored fraction {fraction:.4g} exceeds {limit:.4g}; increase max_steps"
        )
        self.fraction = fraction
        self.limit = limit


class NoCrossings(LevelCrossError):
    pass


class NoSecondCrossings(LevelCrossError):
    pass


class SecondCrossingImpossible(LevelCrossError):
    pass


class AssumptionViolated(LevelCrossError):
    pass


class DegenerateDenominator(LevelCrossError, ZeroDivisionError):
    pass


class NoConvergence(LevelCrossError):
    def __init__(self, rounds, iterates):
        super().__init__(
            f"ceiling did not converge after {rounds} rounds; last iterates {iterates}"
        )
        self.rounds = rounds
        self.iterates = iterates


class InvalidQueueModel(LevelCrossError, ValueError):
    pass


class ConfigError(LevelCrossError):
    def __init__(self, message, path=None, line=None):
        where = []
        if path:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        prefix = ":".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.path = path
        self.line = line


class ScenarioError(LevelCrossError):
    def __init__(self, scenario, cause):
        super().__init__(f"scenario {scenario!r} failed: {cause}")
        self.scenario = scenario
        self.cause = cause
