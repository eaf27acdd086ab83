"""Exception hierarchy shared across the pipeline.

Every error carries an ``exit_code`` so the CLI can map failures onto its
documented exit statuses without a lookup table per command.
"""


class DeepBoostError(Exception):
    exit_code = 1


class MissingInput(DeepBoostError):
    exit_code = 2


class ParseError(DeepBoostError):
    exit_code = 3


class ShapeMismatch(DeepBoostError, ValueError):
    exit_code = 4


class DegenerateInput(DeepBoostError, ValueError):
    exit_code = 5


# signal_io
class BadHeader(ParseError):
    pass


class UnsupportedElement(ParseError):
    def __init__(self, type_code, detail=""):
        self.type_code = type_code
        msg = f"unsupported MAT element type {type_code}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class Truncated(ParseError):
    pass


class NotANumber(ParseError):
    def __init__(self, line, text):
        self.line = line
        super().__init__(f"line {line}: not a number: {text!r}")


class EmptyRecord(ParseError):
    pass


class UnknownTag(ParseError):
    pass


class DuplicateId(ParseError):
    pass


class MissingLabel(MissingInput):
    def __init__(self, ids):
        self.ids = list(ids)
        super().__init__("records without a label: " + ", ".join(self.ids))


class CorruptFile(ParseError):
    pass


class VersionMismatch(ParseError):
    pass


# preprocess
class ConstantSignal(DegenerateInput):
    pass


# neural / dcae
class ChannelMismatch(ShapeMismatch):
    pass


class IndexOutOfRange(ShapeMismatch, IndexError):
    pass


class LengthMismatch(ShapeMismatch):
    pass


class EmptyBatch(DegenerateInput):
    pass


class EmptyTrainingSet(DegenerateInput):
    pass


class NonFiniteLoss(DegenerateInput, FloatingPointError):
    def __init__(self, epoch, batch, value):
        self.epoch, self.batch, self.value = epoch, batch, value
        super().__init__(f"non-finite loss {value} at epoch {epoch}, batch {batch}")


# boosting
class SingleClassInput(DegenerateInput):
    pass


class NonFiniteScore(DegenerateInput, FloatingPointError):
    pass


class EmptyMatrix(DegenerateInput):
    pass


# metrics
class UndefinedMetric(DegenerateInput, ZeroDivisionError):
    def __init__(self, metric):
        self.metric = metric
        super().__init__(f"{metric} is undefined: zero denominator")
