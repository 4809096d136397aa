"""Exception hierarchy.

Two families map onto the CLI exit-code contract: :class:`InputError`
(bad files, bad arguments; exit 2) and :class:`DegeneracyError` (the data
parse fine but the statistic is undefined; exit 3).
"""


class RiskvalError(Exception):
    exit_code = 4


class InputError(RiskvalError, ValueError):
    exit_code = 2


class DegeneracyError(RiskvalError, ArithmeticError):
    exit_code = 3


class MissingFeature(InputError, KeyError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"missing feature {name!r}")

    def __str__(self):
        return self.args[0]


class NonFiniteInput(InputError):
    pass


class OutOfRange(InputError):
    pass


class NonPositiveDivisor(InputError):
    pass


class AllMissing(InputError):
    pass


class EmptySeries(InputError):
    pass


class ModelFormatError(InputError):
    pass


class ParseError(InputError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class UnknownPredictor(InputError):
    pass


class RuleGap(InputError):
    def __init__(self, predictor):
        self.predictor = predictor
        super().__init__(f"no normalization rule for predictor {predictor!r}")


class DegenerateLabels(DegeneracyError):
    pass


class DegenerateDesign(DegeneracyError):
    pass


class ZeroObserved(DegeneracyError):
    pass


class TooFewSubjects(DegeneracyError):
    pass


class TooFewPerStratum(DegeneracyError):
    pass


class ConstantOutcome(DegeneracyError):
    pass


class Separation(DegeneracyError):
    pass


class SingularInformation(DegeneracyError):
    pass


class InvariantViolation(RiskvalError):
    exit_code = 4
