"""Exception types shared across the toolkit."""


class CapkitError(Exception):
    """Base class for operational errors raised by this package."""


class ManifestError(CapkitError):
    """A manifest file is malformed or violates a record invariant."""


class FormatError(CapkitError):
    """A binary store (SEMB, AEMB, checkpoint) is malformed or unsupported."""
