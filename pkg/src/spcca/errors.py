"""Exception and warning types raised by spcca."""


class SpccaError(Exception):
    """Base class for all spcca errors."""

    #: exit code used by the command-line front end
    exit_code = 2


class ConfigError(SpccaError, ValueError):
    pass


class NonFinite(SpccaError, ValueError):
    pass


class ConstantColumn(SpccaError, ValueError):
    def __init__(self, labels):
        self.labels = tuple(labels)
        super().__init__(f"constant column(s): {', '.join(self.labels)}")


class RankDeficient(SpccaError, ValueError):
    def __init__(self, rank, cols):
        self.rank = rank
        self.cols = cols
        super().__init__(f"matrix is rank deficient: estimated rank {rank} < {cols} columns")


class IllPosed(SpccaError, ValueError):
    pass


class TooLarge(SpccaError, ValueError):
    pass


class RedundantDesign(SpccaError, ValueError):
    pass


class EmptyLevel(SpccaError, ValueError):
    pass


class TooFewSamples(SpccaError, ValueError):
    pass


class DegenerateVariate(SpccaError, ArithmeticError):
    exit_code = 3


class AllZeroed(SpccaError, ArithmeticError):
    """Every weight of a data set fell below the sparsity threshold."""

    exit_code = 3

    def __init__(self, set_index, lam):
        self.set_index = set_index
        self.lam = lam
        super().__init__(
            f"all weights of data set {set_index} were thresholded to zero (lambda={lam:g})"
        )


class NoConvergedRun(SpccaError, ArithmeticError):
    exit_code = 3


class PermutationAborted(SpccaError, RuntimeError):
    exit_code = 3


class ConvergenceWarning(UserWarning):
    pass


class LambdaWarning(UserWarning):
    pass
