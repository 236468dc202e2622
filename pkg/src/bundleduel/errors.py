"""Exception types raised by the toolkit."""


class BundleDuelError(Exception):
    """Base class for all toolkit errors."""


class OffGridValue(BundleDuelError, ValueError):
    """A value or price is not an exact multiple of the grid step."""


class ProbSumMismatch(BundleDuelError, ValueError):
    """Probabilities are negative or do not sum to one."""


class TrivialDistribution(BundleDuelError, ValueError):
    """All probability mass sits at value zero."""


class UnsupportedFamily(BundleDuelError, ValueError):
    """Requested analytic family has no closed-form certification."""


class NonThresholdBehavior(BundleDuelError, RuntimeError):
    """Buyer choices along a price sweep lack the two-set threshold shape."""


class GridOverflow(BundleDuelError, ValueError):
    """A support or sum support exceeds the representable tick range."""


class UnsupportedMenuAtScale(BundleDuelError, ValueError):
    """Requested computation is not available for this menu and item count."""


class BudgetExceeded(BundleDuelError, RuntimeError):
    """An enumeration would exceed its configured budget."""


class ZeroVarianceSummand(BundleDuelError, ValueError):
    """A summand has zero variance where positive variance is required."""


class HypothesisNotMet(BundleDuelError, ValueError):
    """A lemma precondition fails for the supplied input."""


class ParseError(BundleDuelError, ValueError):
    """Malformed input file; carries the offending line number."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)
