"""Exception hierarchy.

Two families matter to callers: :class:`InputError` (bad data or arguments,
CLI exit code 2) and :class:`NumericalError` (a well-formed input that the
linear algebra cannot handle, CLI exit code 3).
"""

from __future__ import annotations


class EllipstressError(Exception):
    """Base class for every error raised by this package."""


class InputError(EllipstressError, ValueError):
    """Malformed arguments or data."""


class NumericalError(EllipstressError, ArithmeticError):
    """A numerical precondition failed (definiteness, degeneracy, ...)."""


class NotSymmetric(NumericalError):
    def __init__(self, max_asym: float, tol: float):
        self.max_asym = max_asym
        self.tol = tol
        super().__init__(
            f"matrix is not symmetric: max relative asymmetry {max_asym:.3g} > {tol:g}"
        )


class NotPositiveDefinite(NumericalError):
    """Cholesky factorization failed or hit a near-zero pivot.

    ``pivot`` is the 0-based index of the failing pivot, ``labels`` the names
    of the variables involved when known.
    """

    def __init__(self, pivot: int, labels: list[str] | None = None, detail: str = ""):
        self.pivot = pivot
        self.labels = list(labels) if labels is not None else None
        msg = f"matrix is not positive definite (failing pivot index {pivot})"
        if self.labels is not None:
            msg += f"; variables {self.labels}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class DimensionMismatch(InputError):
    pass


class IndexOutOfRange(InputError):
    pass


class OverlappingSets(InputError):
    pass


class EmptySet(InputError):
    pass


class InvalidQuantile(InputError):
    pass


class NonPositiveScale(InputError):
    pass


class InvalidParameters(InputError):
    pass


class InvalidNu(InvalidParameters):
    pass


class DegenerateTopEigenvalue(NumericalError):
    pass


class RankDeficient(NumericalError):
    def __init__(self, msg: str, pair: tuple[str, str] | None = None):
        self.pair = pair
        super().__init__(msg)


class KurtosisTooLow(NumericalError):
    pass


class InternalConsistencyError(NumericalError):
    pass


class ParseError(InputError):
    def __init__(self, msg: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + msg)


class NonPositivePrice(InputError):
    def __init__(self, ticker: str, date: str, value: float, line: int | None = None):
        self.ticker = ticker
        self.date = date
        self.value = value
        self.line = line
        loc = f" (line {line})" if line is not None else ""
        super().__init__(f"non-positive price {value!r} for {ticker} on {date}{loc}")


class UnmappedTicker(InputError):
    def __init__(self, tickers: list[str]):
        self.tickers = list(tickers)
        super().__init__(f"tickers without a group: {', '.join(self.tickers)}")
