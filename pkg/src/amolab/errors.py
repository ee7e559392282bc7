class AmolabError(Exception):
    """Base class for all errors raised by the package."""


class InvalidArgument(AmolabError, ValueError):
    pass


class DegeneratePhaseError(AmolabError):
    """Some scanned ``||2theta + k alpha||`` is exactly zero."""

    def __init__(self, k, msg=None):
        self.k = k
        super().__init__(msg or f"degenerate phase: 2*theta + {k}*alpha is an integer")


class DegenerateArgumentError(AmolabError):
    def __init__(self, k, msg=None):
        self.k = k
        super().__init__(msg or f"sin(pi*(x + {k}*alpha)) vanishes exactly")


class ConstructionFailed(AmolabError):
    def __init__(self, pair, msg=None):
        self.pair = pair
        super().__init__(msg or f"phase construction failed: resonances {pair[0]} and {pair[1]} collide")


class BoxSingularError(AmolabError):
    pass


class IllConditionedEigenpair(AmolabError):
    def __init__(self, mismatch, msg=None):
        self.mismatch = mismatch
        super().__init__(msg or f"glue mismatch {mismatch:.3e} not reducible below 1e-6")


class UnverifiedHypothesis(AmolabError):
    pass


class DegenerateSetError(AmolabError):
    def __init__(self, pair, msg=None):
        self.pair = pair
        super().__init__(msg or f"samples {pair[0]} and {pair[1]} have coincident cos values")


class CoverageError(AmolabError):
    def __init__(self, missing, msg=None):
        self.missing = missing
        super().__init__(msg or f"profile window does not cover paths {missing}")


class NotAResonance(AmolabError):
    pass


class InvalidRegime(AmolabError):
    pass
