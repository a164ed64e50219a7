"""Array payloads; sequence and solution files are in ``dogfit.io.layout`` and ``dogfit.io.solution``."""

from .arrays import ArrayPayload, decode_array, encode_array

__all__ = ["ArrayPayload", "decode_array", "encode_array"]
