"""Shared exception types."""


class OutOfSupportError(ValueError):
    """A lattice value fell outside a distribution's truncated support."""


class SamplerError(RuntimeError):
    """The rejection sampler exceeded its iteration cap."""


class FormatError(ValueError):
    """A serialized artifact is malformed or cannot be represented."""


class ModelLoadError(FormatError):
    """Model byte-stream rejected; message carries the offending position."""
