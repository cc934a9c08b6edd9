"""Exception types shared across the engine."""


class VolindexError(Exception):
    """Base class for all engine errors."""


class ChainParseError(VolindexError):
    """Malformed or inconsistent market-data input; carries the offending line."""

    def __init__(self, message: str, line_no: int | None = None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class QuoteInvariantError(VolindexError):
    """An option quote violates a structural invariant (e.g. bid > ask)."""


class NoBracketingExpiryError(VolindexError):
    """No pair of listed expiries brackets the requested horizon."""


class MissingRateError(VolindexError):
    """No interest rate available for a required tenor."""


class ForwardError(VolindexError):
    """Forward price cannot be derived (no strike quotes both kinds)."""


class NegativeVarianceError(VolindexError):
    """Interpolated index variance came out negative; refusing to clamp."""


class FeatureBuildError(VolindexError):
    """A feature row cannot be constructed for a date (used in skip reports)."""


class InsufficientDataError(VolindexError):
    """Not enough observations for the requested window or split."""


class RankDeficientError(VolindexError):
    """Design matrix is rank deficient; OLS refuses to pseudo-invert silently."""


class TrainingDivergedError(VolindexError):
    """Network training produced a non-finite loss."""

    def __init__(self, epoch: int, loss: float):
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}")
        self.epoch = epoch


class NotPiecewiseLinearError(VolindexError):
    """Local affine coefficients requested from a model that has none."""


class NotTradableError(VolindexError):
    """Forecast depends on non-option features and cannot be replicated."""


class ReplicationError(VolindexError):
    """Portfolio legs cannot be priced against the snapshot (missing quote)."""
