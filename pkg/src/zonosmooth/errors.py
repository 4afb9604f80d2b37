"""Exceptions shared by the estimators."""


class InconsistentDataError(RuntimeError):
    """An exact recursion produced an empty range.

    With a correct model and consistent measurements this cannot happen, so it
    points at model mismatch or corrupted data.  ``k`` is the time index and
    ``trial``/``seed`` identify the Monte-Carlo run when known.
    """

    def __init__(self, message, k=None, trial=None, seed=None):
        super().__init__(message)
        self.k = k
        self.trial = trial
        self.seed = seed
