"""Exception hierarchy shared by the library and the command line.

Each class carries the exit code the CLI maps it to.
"""


class DistressBenchError(Exception):
    exit_code = 1
    kind = "error"


class ManifestError(DistressBenchError):
    exit_code = 2
    kind = "manifest"


class DataError(DistressBenchError):
    exit_code = 3
    kind = "data"


class NumericalError(DistressBenchError):
    exit_code = 4
    kind = "numerical"


class ConvergenceError(NumericalError):
    """Raised when an iterative solver stops at its iteration cap.

    ``last_objective`` holds the objective value at the final iterate.
    """

    def __init__(self, message, last_objective=None):
        super().__init__(message)
        self.last_objective = last_objective


class SchemaMismatchError(DataError):
    pass
