"""Exception hierarchy shared by all difflab modules."""


class DifflabError(Exception):
    """Base class for all difflab errors."""


class InputError(DifflabError):
    """Malformed input: dimension mismatch, bad config, unparsable file."""


class ResolutionError(DifflabError):
    """Grid too coarse for the requested ball or mollification width."""


class DegenerateBasisError(DifflabError):
    """Gram matrix numerically singular; input basis not independent."""


class PreconditionError(DifflabError):
    """Mathematical precondition violated (non-elliptic, non-FDN, not in range)."""


class EmptySearchError(DifflabError):
    """A search was requested with zero trials."""
