class StarIndexError(Exception):
    pass


class ParseError(StarIndexError):
    pass


class InconsistentRules(StarIndexError):
    pass


class ZeroInverse(StarIndexError, ZeroDivisionError):
    pass


class EmptyWindow(StarIndexError):
    pass


class OutOfWindow(StarIndexError):
    pass


class ZeroElement(StarIndexError):
    pass


class MixedParity(StarIndexError):
    pass


class NonUnitDensity(StarIndexError):
    pass


class PreconditionViolated(StarIndexError):
    pass


class SingularMetric(StarIndexError):
    pass


class NonClosedGradient(StarIndexError):
    pass


class NonExpressible(StarIndexError):
    pass


class SingularSuperHessian(StarIndexError):
    pass


class NonConvergentWindow(StarIndexError):
    pass


class ZeroK(StarIndexError):
    pass


class WindowExhausted(StarIndexError):
    pass


class DivergentTerm(StarIndexError):
    pass


class SingularH(StarIndexError):
    pass


class Divergent(StarIndexError):
    pass


class NoClosedForm(StarIndexError):
    pass


class TDependenceResidual(StarIndexError):
    pass
