"""Exception taxonomy.

Three broad families map onto the CLI exit codes: configuration problems
(exit 2), data problems (exit 3) and numeric failures (exit 4).
"""


class HindsightAttribError(Exception):
    """Base class for all package errors."""


class ConfigError(HindsightAttribError):
    """Invalid run configuration (bad ranges, bad parameters, bad schema)."""


class DataError(HindsightAttribError):
    """Input data cannot be loaded or violates panel invariants."""


class NumericError(HindsightAttribError):
    """A numeric computation failed or is undefined."""


# --- data / panel ---

class MissingFile(DataError):
    pass


class MissingColumn(DataError):
    pass


class UnparsableRow(DataError):
    def __init__(self, line, message):
        self.line = line
        super().__init__(f"line {line}: {message}")


class NonPositivePrice(DataError):
    def __init__(self, ticker, date, message="non-positive price"):
        self.ticker = ticker
        self.date = date
        super().__init__(f"{message} for {ticker} on {date}")


class EmptyIntersection(DataError):
    pass


class SlotOutOfRange(HindsightAttribError):
    pass


class InsufficientHistory(HindsightAttribError):
    pass


# --- features ---

class SeriesTooShort(HindsightAttribError):
    pass


class FeatureUndefined(HindsightAttribError):
    def __init__(self, slot, message="feature undefined"):
        self.slot = slot
        super().__init__(f"{message} at slot {slot}")


# --- optimization ---

class NonFiniteInput(NumericError):
    pass


# --- regression ---

class RankDeficient(NumericError):
    pass


class WindowTooLong(HindsightAttribError):
    pass


# --- neural nets ---

class BadArchitecture(ConfigError):
    pass


class DimensionMismatch(HindsightAttribError):
    pass


class ShapeMismatch(HindsightAttribError):
    pass


class StaleCache(HindsightAttribError):
    pass


# --- agents / environment ---

class NotOnSimplex(HindsightAttribError):
    pass


class EpisodeFinished(HindsightAttribError):
    pass


class NaNLoss(NumericError):
    pass


# --- ML baselines ---

class ModelNotFitted(HindsightAttribError):
    pass


class DegenerateTarget(NumericError):
    pass


class TooFewSamples(HindsightAttribError):
    pass


# --- attribution / metrics ---

class NonFiniteGradient(NumericError):
    pass


class NoOverlap(HindsightAttribError):
    pass


class ZeroVariance(NumericError):
    pass


class ZeroVolatility(NumericError):
    pass
